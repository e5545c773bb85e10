#include "tsw/sass.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include "tsw/error.hpp"

namespace tsw {

std::string to_string(Format f) {
    switch (f) {
        case Format::Sass: return "SASS";
        case Format::Indep: return "INDEP";
        case Format::Dense: return "DENSE";
    }
    return "?";
}

void ModuleHeader::write(BitWriter& w) const {
    w.write(static_cast<std::uint64_t>(format), 2);
    w.write(static_cast<std::uint64_t>(bits), 4);
    w.write(group == 0 ? 0 : group - 1, 8);
    w.write(size, 27);
    w.write_f32(scale);
    w.write_f32(range_neg);
    w.write_f32(range_pos);
}

ModuleHeader ModuleHeader::read(BitReader& r) {
    const std::size_t start = r.position();
    ModuleHeader h;
    const auto tag = r.read(2);
    if (tag > 2) {
        throw CorruptionError("unknown format tag", start);
    }
    h.format = static_cast<Format>(tag);
    h.bits = static_cast<int>(r.read(4));
    const auto group_field = static_cast<std::uint32_t>(r.read(8));
    h.group = group_field + 1;
    h.size = static_cast<std::uint32_t>(r.read(27));
    const std::size_t floats_at = r.position();
    h.scale = r.read_f32();
    h.range_neg = r.read_f32();
    h.range_pos = r.read_f32();
    switch (h.format) {
        case Format::Sass: {
            if (!is_supported_bitwidth(h.bits)) {
                throw CorruptionError("unsupported bit-width", start + 2);
            }
            const auto cands = group_candidates(h.size);
            if (std::find(cands.begin(), cands.end(), h.group) == cands.end()) {
                throw CorruptionError("group size does not divide the element count", start + 6);
            }
            break;
        }
        case Format::Indep:
            if (!is_supported_bitwidth(h.bits)) {
                throw CorruptionError("unsupported bit-width", start + 2);
            }
            if (group_field != 0) {
                throw CorruptionError("group field must be zero outside SASS", start + 6);
            }
            break;
        case Format::Dense:
            if (h.bits != 0 || group_field != 0) {
                throw CorruptionError("dense header carries quantizer fields", start + 2);
            }
            if (std::bit_cast<std::uint32_t>(h.scale) != 0 || std::bit_cast<std::uint32_t>(h.range_neg) != 0 ||
                std::bit_cast<std::uint32_t>(h.range_pos) != 0) {
                throw CorruptionError("dense header carries quantizer fields", floats_at);
            }
            h.bits = 0;
            break;
    }
    return h;
}

int index_bits(std::uint32_t c) noexcept {
    return c <= 1 ? 0 : std::bit_width(c - 1);
}

std::vector<std::uint32_t> group_candidates(std::uint32_t n) {
    std::vector<std::uint32_t> out;
    if (n == 0) {
        return {1};
    }
    for (std::uint32_t c = 1; c <= kMaxGroup && c <= n; ++c) {
        if (n % c == 0) {
            out.push_back(c);
        }
    }
    return out;
}

double expected_bits(std::uint32_t n, std::uint32_t c, double alpha, int bits) {
    if (c == 0) {
        throw DomainError("group size must be positive");
    }
    const double nn = static_cast<double>(n);
    return kFormulaHeaderBits + nn / c + nn * (1.0 - alpha) * (index_bits(c) + bits + 1);
}

std::uint32_t optimal_group(std::uint32_t n, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw DomainError("sparsity must lie in [0, 1]");
    }
    const auto cands = group_candidates(n);
    std::uint32_t best = cands.front();
    double best_bits = std::numeric_limits<double>::infinity();
    for (auto c : cands) {
        // The width term is the same for every c, so b = 0 here.
        const double e = expected_bits(n, c, alpha, 0);
        if (e < best_bits) {
            best_bits = e;
            best = c;
        }
    }
    return best;
}

std::uint32_t nearest_group(std::uint32_t n, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw DomainError("sparsity must lie in [0, 1]");
    }
    const auto cands = group_candidates(n);
    if (alpha >= 1.0) {
        return cands.back();
    }
    const double target = std::numbers::ln2 / (1.0 - alpha);
    std::uint32_t best = cands.front();
    double best_gap = std::numeric_limits<double>::infinity();
    for (auto c : cands) {
        const double gap = std::abs(target - c);
        if (gap < best_gap) {
            best_gap = gap;
            best = c;
        }
    }
    return best;
}

std::size_t sass_payload_bits(std::uint32_t n, std::uint32_t c, std::size_t nnz, int bits) {
    return n / c + nnz * static_cast<std::size_t>(index_bits(c) + bits + 1);
}

std::size_t indep_payload_bits(std::uint32_t n, int bits) {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(bits + 1);
}

std::size_t dense_payload_bits(std::uint32_t n) { return static_cast<std::size_t>(n) * 32; }

namespace {

void check_capacity(std::size_t n) {
    if (n >= kMaxElements) {
        throw EncodingError("module has " + std::to_string(n) + " elements, limit is 2^27 - 1");
    }
}

ModuleHeader quantized_header(const QuantizedModule& q, Format f, std::uint32_t group) {
    return ModuleHeader{f, q.bits, group, q.size, q.scale, q.range_neg, q.range_pos};
}

EncodedModule finish(BitWriter&& w, const ModuleHeader& h) {
    EncodedModule e;
    e.header = h;
    e.payload_bits = w.bit_count() - kHeaderBits;
    e.bytes = std::move(w).finish();
    return e;
}

}  // namespace

void write_sass(BitWriter& w, const QuantizedModule& q, std::uint32_t group) {
    check_capacity(q.size);
    q.validate();
    const auto cands = group_candidates(q.size);
    if (std::find(cands.begin(), cands.end(), group) == cands.end()) {
        throw DomainError("group size " + std::to_string(group) + " does not divide " + std::to_string(q.size) +
                          " or exceeds 256");
    }
    quantized_header(q, Format::Sass, group).write(w);
    const std::uint32_t groups = q.size / group;
    std::vector<std::uint8_t> occupied(groups, 0);
    for (auto p : q.positions) {
        occupied[p / group] = 1;
    }
    for (auto o : occupied) {
        w.write_bit(o != 0);
    }
    const int ib = index_bits(group);
    for (std::size_t k = 0; k < q.positions.size(); ++k) {
        const auto p = q.positions[k];
        const bool last = k + 1 == q.positions.size() || q.positions[k + 1] / group != p / group;
        w.write(p % group, ib);
        w.write(q.bins[k], q.bits);
        w.write_bit(last);
    }
}

void write_indep(BitWriter& w, const QuantizedModule& q) {
    check_capacity(q.size);
    q.validate();
    quantized_header(q, Format::Indep, 1).write(w);
    std::vector<std::uint16_t> bins(q.size, 0);
    std::vector<std::uint8_t> mask(q.size, 0);
    for (std::size_t k = 0; k < q.positions.size(); ++k) {
        mask[q.positions[k]] = 1;
        bins[q.positions[k]] = q.bins[k];
    }
    for (auto m : mask) {
        w.write_bit(m != 0);
    }
    for (auto b : bins) {
        w.write(b, q.bits);
    }
}

void write_dense(BitWriter& w, std::span<const float> values) {
    check_capacity(values.size());
    ModuleHeader h{Format::Dense, 0, 1, static_cast<std::uint32_t>(values.size()), 0.0f, 0.0f, 0.0f};
    h.write(w);
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw EncodingError("dense values must be finite");
        }
        w.write_f32(v == 0.0f ? 0.0f : v);
    }
}

EncodedModule encode_sass(const QuantizedModule& q, std::uint32_t group) {
    BitWriter w;
    write_sass(w, q, group);
    return finish(std::move(w), quantized_header(q, Format::Sass, group));
}

EncodedModule encode_sass(const QuantizedModule& q) { return encode_sass(q, optimal_group(q.size, q.sparsity())); }

EncodedModule encode_indep(const QuantizedModule& q) {
    BitWriter w;
    write_indep(w, q);
    return finish(std::move(w), quantized_header(q, Format::Indep, 1));
}

EncodedModule encode_dense(std::span<const float> values) {
    BitWriter w;
    write_dense(w, values);
    return finish(std::move(w),
                  ModuleHeader{Format::Dense, 0, 1, static_cast<std::uint32_t>(values.size()), 0.0f, 0.0f, 0.0f});
}

Format choose_format(const QuantizedModule& q) {
    const std::size_t sass = sass_payload_bits(q.size, optimal_group(q.size, q.sparsity()), q.nnz(), q.bits);
    const std::size_t indep = indep_payload_bits(q.size, q.bits);
    const std::size_t dense = dense_payload_bits(q.size);
    if (sass <= indep && sass <= dense) {
        return Format::Sass;
    }
    return indep <= dense ? Format::Indep : Format::Dense;
}

EncodedModule encode_best(const QuantizedModule& q) {
    switch (choose_format(q)) {
        case Format::Sass: return encode_sass(q);
        case Format::Indep: return encode_indep(q);
        case Format::Dense: {
            const auto v = q.values();
            return encode_dense(v);
        }
    }
    throw EncodingError("unreachable format");
}

std::vector<float> DecodedModule::values() const {
    return header.format == Format::Dense ? dense : quantized.values();
}

DecodedModule read_module(BitReader& r) {
    DecodedModule m;
    m.header = ModuleHeader::read(r);
    const auto& h = m.header;
    const std::size_t payload_start = r.position();
    if (h.format == Format::Dense) {
        m.dense.reserve(h.size);
        for (std::uint32_t i = 0; i < h.size; ++i) {
            const std::size_t at = r.position();
            const float v = r.read_f32();
            if (!std::isfinite(v) || std::bit_cast<std::uint32_t>(v) == 0x80000000u) {
                throw CorruptionError("non-canonical dense value", at);
            }
            m.dense.push_back(v);
        }
        m.payload_bits = r.position() - payload_start;
        return m;
    }
    QuantizedModule& q = m.quantized;
    q.size = h.size;
    q.bits = h.bits;
    q.scale = h.scale;
    q.range_neg = h.range_neg;
    q.range_pos = h.range_pos;
    if (h.format == Format::Indep) {
        if (r.remaining() < indep_payload_bits(h.size, h.bits)) {
            throw CorruptionError("truncated stream", r.position());
        }
        std::vector<std::uint8_t> mask(h.size);
        for (auto& b : mask) {
            b = r.read_bit() ? 1 : 0;
        }
        for (std::uint32_t i = 0; i < h.size; ++i) {
            const std::size_t at = r.position();
            const auto bin = static_cast<std::uint16_t>(r.read(h.bits));
            if (mask[i]) {
                q.positions.push_back(i);
                q.bins.push_back(bin);
            } else if (bin != 0) {
                throw CorruptionError("masked-out element carries a bin", at);
            }
        }
        m.payload_bits = r.position() - payload_start;
        return m;
    }
    const std::uint32_t c = h.group;
    const std::uint32_t groups = h.size / c;
    if (r.remaining() < groups) {
        throw CorruptionError("truncated group bitmap", r.position());
    }
    std::vector<std::uint8_t> occupied(groups);
    for (auto& g : occupied) {
        g = r.read_bit() ? 1 : 0;
    }
    const int ib = index_bits(c);
    for (std::uint32_t g = 0; g < groups; ++g) {
        if (!occupied[g]) {
            continue;
        }
        std::int64_t prev = -1;
        for (;;) {
            const std::size_t at = r.position();
            const auto idx = static_cast<std::uint32_t>(r.read(ib));
            if (idx >= c || static_cast<std::int64_t>(idx) <= prev) {
                throw CorruptionError("intra-group index out of order or range", at);
            }
            prev = idx;
            q.positions.push_back(g * c + idx);
            q.bins.push_back(static_cast<std::uint16_t>(r.read(h.bits)));
            if (r.read_bit()) {
                break;
            }
        }
    }
    m.payload_bits = r.position() - payload_start;
    return m;
}

DecodedModule decode_module(std::span<const std::uint8_t> bytes) {
    BitReader r(bytes);
    auto m = read_module(r);
    r.skip_padding();
    if (r.remaining() != 0) {
        throw CorruptionError("trailing bytes after module", r.position());
    }
    return m;
}

EncodedModule reencode(const DecodedModule& m) {
    switch (m.header.format) {
        case Format::Sass: return encode_sass(m.quantized, m.header.group);
        case Format::Indep: return encode_indep(m.quantized);
        case Format::Dense: return encode_dense(m.dense);
    }
    throw EncodingError("unreachable format");
}

}  // namespace tsw
