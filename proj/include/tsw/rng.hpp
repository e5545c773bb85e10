#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tsw {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Counter-based split of a root seed: each (root, stream, index) gets an independent stream.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a over the stream label
    for (char c : stream) {
        h = (h ^ static_cast<unsigned char>(c)) * 0x100000001B3ull;
    }
    return splitmix64(splitmix64(root ^ h) + index);
}

inline Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) {
    return Rng(derive_seed(root, stream, index));
}

}  // namespace tsw
