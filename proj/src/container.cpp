#include "tsw/container.hpp"

#include <fstream>
#include <iterator>

#include "tsw/error.hpp"

namespace tsw {

namespace {

constexpr std::uint8_t kMagic[4] = {'T', 'S', 'W', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

class ByteCursor {
public:
    explicit ByteCursor(std::span<const std::uint8_t> b) : bytes_(b) {}

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw CorruptionError("truncated bundle", pos_ * 8);
        }
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const noexcept { return pos_; }
    void seek(std::size_t p) noexcept { pos_ = p; }
    std::size_t size() const noexcept { return bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

ParamSet LoadedTask::to_params(std::span<const std::string> names) const {
    if (names.size() != modules.size()) {
        throw StructuralError("task '" + task_id + "' has " + std::to_string(modules.size()) +
                              " modules, layout expects " + std::to_string(names.size()));
    }
    ParamSet p;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto v = modules[i].values();
        p.add(names[i], std::vector<double>(v.begin(), v.end()));
    }
    return p;
}

std::vector<std::uint8_t> serialize_bundle(std::span<const StoredTask> tasks) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    out.push_back(kContainerVersion);
    put_u32(out, static_cast<std::uint32_t>(tasks.size()));
    for (const auto& t : tasks) {
        if (t.task_id.size() > 0xFFFF) {
            throw EncodingError("task id longer than 65535 bytes");
        }
        put_u16(out, static_cast<std::uint16_t>(t.task_id.size()));
        out.insert(out.end(), t.task_id.begin(), t.task_id.end());
        put_u32(out, static_cast<std::uint32_t>(t.modules.size()));
        for (const auto& m : t.modules) {
            out.insert(out.end(), m.bytes.begin(), m.bytes.end());
        }
    }
    return out;
}

std::vector<LoadedTask> parse_bundle(std::span<const std::uint8_t> bytes) {
    ByteCursor cur(bytes);
    for (auto m : kMagic) {
        if (cur.u8() != m) {
            throw CorruptionError("bad magic", 0);
        }
    }
    const auto version = cur.u8();
    if (version != kContainerVersion) {
        throw CorruptionError("unsupported container version " + std::to_string(version), 32);
    }
    const std::uint32_t count = cur.u32();
    std::vector<LoadedTask> tasks;
    for (std::uint32_t t = 0; t < count; ++t) {
        LoadedTask task;
        task.task_id = cur.str(cur.u16());
        const std::uint32_t modules = cur.u32();
        const std::size_t start = cur.pos();
        BitReader r(bytes, start * 8);
        for (std::uint32_t m = 0; m < modules; ++m) {
            task.modules.push_back(read_module(r));
            r.skip_padding();
        }
        cur.seek(r.position() / 8);
        task.file_bytes = cur.pos() - start;
        tasks.push_back(std::move(task));
    }
    if (cur.pos() != cur.size()) {
        throw CorruptionError("trailing bytes after bundle", cur.pos() * 8);
    }
    return tasks;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_bundle(const std::filesystem::path& path, std::span<const StoredTask> tasks) {
    write_file(path, serialize_bundle(tasks));
}

std::vector<LoadedTask> load_bundle(const std::filesystem::path& path) { return parse_bundle(read_file(path)); }

StoredTask dense_task(const std::string& id, const ParamSet& params) {
    StoredTask t{id, {}};
    for (const auto& m : params.modules()) {
        std::vector<float> f(m.values.begin(), m.values.end());
        t.modules.push_back(encode_dense(f));
    }
    return t;
}

void save_params(const std::filesystem::path& path, const ParamSet& params, const std::string& id) {
    const StoredTask t = dense_task(id, params);
    save_bundle(path, std::span<const StoredTask>(&t, 1));
}

ParamSet load_params(const std::filesystem::path& path, std::span<const std::string> names) {
    const auto tasks = load_bundle(path);
    if (tasks.size() != 1) {
        throw StructuralError(path.string() + " holds " + std::to_string(tasks.size()) + " entries, expected one");
    }
    return tasks.front().to_params(names);
}

}  // namespace tsw
