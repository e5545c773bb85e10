#pragma once

// Bundle file: "TSWC", version byte, u32 task count (little-endian), then per task a u16-length
// UTF-8 id, a u32 module count and the byte-aligned modules. Module names are not stored;
// modules line up positionally with the model layout.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tsw/sass.hpp"
#include "tsw/vector_core.hpp"

namespace tsw {

inline constexpr std::uint8_t kContainerVersion = 1;

struct StoredTask {
    std::string task_id;
    std::vector<EncodedModule> modules;
};

struct LoadedTask {
    std::string task_id;
    std::vector<DecodedModule> modules;
    std::size_t file_bytes = 0;  // bytes spent on this task's modules

    // Values as doubles, named positionally; throws StructuralError on count or length mismatch.
    ParamSet to_params(std::span<const std::string> names) const;
};

std::vector<std::uint8_t> serialize_bundle(std::span<const StoredTask> tasks);
// Throws CorruptionError (bit offset into the buffer) on malformed input.
std::vector<LoadedTask> parse_bundle(std::span<const std::uint8_t> bytes);

void save_bundle(const std::filesystem::path& path, std::span<const StoredTask> tasks);
std::vector<LoadedTask> load_bundle(const std::filesystem::path& path);

// Model weights: every module stored DENSE, so values round to float32.
StoredTask dense_task(const std::string& id, const ParamSet& params);
void save_params(const std::filesystem::path& path, const ParamSet& params, const std::string& id = "params");
ParamSet load_params(const std::filesystem::path& path, std::span<const std::string> names);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace tsw
