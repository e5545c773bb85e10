#include "tsw/bas.hpp"

#include <algorithm>
#include <cmath>

#include "tsw/error.hpp"
#include "tsw/vector_core.hpp"

namespace tsw {

bool is_supported_bitwidth(int bits) noexcept {
    return std::find(kBitWidths.begin(), kBitWidths.end(), bits) != kBitWidths.end();
}

double QuantSpec::step() const noexcept { return (range_pos + range_neg) / static_cast<double>(bin_count()); }

double QuantSpec::center(std::uint32_t index) const noexcept {
    return -range_neg + (static_cast<double>(index) + 0.5) * step();
}

QuantSpec QuantSpec::from_values(std::span<const double> v, int bits) {
    const auto sb = signed_bounds(v);
    return QuantSpec{bits, sb.has_neg ? sb.v_max_neg : 0.0, sb.has_pos ? sb.v_max_pos : 0.0};
}

std::uint32_t quantize_index(double x, const QuantSpec& spec) noexcept {
    const double delta = spec.step();
    if (!(delta > 0.0)) {
        return 0;
    }
    const double r = std::ceil((x + spec.range_neg) / delta);
    const double top = static_cast<double>(spec.bin_count());
    // NaN falls to the lowest bin.
    const double c = r >= 1.0 ? std::min(r, top) : 1.0;
    return static_cast<std::uint32_t>(c) - 1;
}

Quantized quantize(std::span<const double> v, const QuantSpec& spec) {
    Quantized q;
    q.values.reserve(v.size());
    q.indices.reserve(v.size());
    for (double x : v) {
        const auto i = quantize_index(x, spec);
        q.indices.push_back(i);
        q.values.push_back(spec.center(i));
    }
    return q;
}

QuantLadder QuantLadder::build(std::span<const double> v, double range_neg, double range_pos) {
    QuantLadder l;
    l.range_neg = range_neg;
    l.range_pos = range_pos;
    for (std::size_t i = 0; i < kBitWidths.size(); ++i) {
        l.levels[i] = quantize(v, QuantSpec{kBitWidths[i], range_neg, range_pos}).values;
    }
    return l;
}

QuantLadder QuantLadder::build(std::span<const double> v) {
    const auto spec = QuantSpec::from_values(v, 1);
    return build(v, spec.range_neg, spec.range_pos);
}

std::vector<double> mixed_quantize(std::span<const double> v, const std::array<double, 4>& logits, double omega) {
    if (!(omega > 0.0)) {
        throw DomainError("bit-width temperature must be positive");
    }
    return mixed_quantize(QuantLadder::build(v), logits, omega);
}

std::vector<ad::Var> mixed_quantize_ste(std::span<const ad::Var> v, double range_neg, double range_pos,
                                        const std::array<ad::Var, 4>& logits, double omega) {
    std::vector<double> raw(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        raw[j] = v[j].value();
    }
    const auto ladder = QuantLadder::build(raw, range_neg, range_pos);
    const auto p = bit_probabilities(logits, omega);
    std::vector<ad::Var> out;
    out.reserve(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        double value = 0.0;
        std::array<ad::Edge, 5> edges;
        for (std::size_t i = 0; i < 4; ++i) {
            value += p[i].value() * ladder.levels[i][j];
            edges[i] = ad::Edge{p[i], ladder.levels[i][j]};
        }
        const bool inside = raw[j] >= -range_neg && raw[j] <= range_pos;
        edges[4] = ad::Edge{v[j], inside ? 1.0 : 0.0};
        ad::Tape* t = nullptr;
        for (const auto& e : edges) {
            if (e.parent.tape()) {
                t = e.parent.tape();
                break;
            }
        }
        out.push_back(t ? t->record(value, edges) : ad::Var(value));
    }
    return out;
}

int select_bitwidth(const std::array<double, 4>& logits) noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) {
            best = i;
        }
    }
    return kBitWidths[best];
}

double QuantizedModule::sparsity() const noexcept {
    return size ? 1.0 - static_cast<double>(positions.size()) / static_cast<double>(size) : 1.0;
}

float QuantizedModule::bin_value(std::uint32_t bin) const noexcept {
    const float v = static_cast<float>(static_cast<double>(scale) * spec().center(bin));
    return v == 0.0f ? 0.0f : v;
}

std::vector<float> QuantizedModule::values() const {
    std::vector<float> out(size, 0.0f);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        out[positions[i]] = bin_value(bins[i]);
    }
    return out;
}

std::vector<double> QuantizedModule::values_f64() const {
    const auto f = values();
    return {f.begin(), f.end()};
}

void QuantizedModule::validate() const {
    if (!is_supported_bitwidth(bits)) {
        throw StructuralError("unsupported bit-width " + std::to_string(bits));
    }
    if (positions.size() != bins.size()) {
        throw StructuralError("positions and bins differ in length");
    }
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= size || (i > 0 && positions[i] <= positions[i - 1])) {
            throw StructuralError("survivor positions must be strictly increasing and below the module size");
        }
        if (bins[i] >= (1u << bits)) {
            throw StructuralError("bin index " + std::to_string(bins[i]) + " exceeds " + std::to_string(bits) +
                                  "-bit range");
        }
    }
}

QuantizedModule quantize_masked(std::span<const double> v, std::span<const std::uint8_t> mask, int bits,
                                float range_neg, float range_pos, float scale) {
    if (v.size() != mask.size()) {
        throw StructuralError("quantize_masked: mask length mismatch");
    }
    QuantizedModule q;
    q.size = static_cast<std::uint32_t>(v.size());
    q.bits = bits;
    q.range_neg = range_neg;
    q.range_pos = range_pos;
    q.scale = scale;
    const auto spec = q.spec();
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (mask[j]) {
            q.positions.push_back(static_cast<std::uint32_t>(j));
            q.bins.push_back(static_cast<std::uint16_t>(quantize_index(v[j], spec)));
        }
    }
    return q;
}

QuantizedModule from_values(std::span<const float> values, int bits, float range_neg, float range_pos, float scale) {
    QuantizedModule q;
    q.size = static_cast<std::uint32_t>(values.size());
    q.bits = bits;
    q.range_neg = range_neg;
    q.range_pos = range_pos;
    q.scale = scale;
    if (!is_supported_bitwidth(bits)) {
        throw EncodingError("unsupported bit-width " + std::to_string(bits));
    }
    const auto spec = q.spec();
    const double delta = spec.step();
    for (std::size_t j = 0; j < values.size(); ++j) {
        const float v = values[j];
        if (v == 0.0f) {
            continue;
        }
        std::int64_t found = -1;
        if (delta > 0.0 && scale != 0.0f) {
            const double guess = (static_cast<double>(v) / scale + spec.range_neg) / delta - 0.5;
            const auto g = static_cast<std::int64_t>(std::llround(guess));
            for (std::int64_t c = g - 1; c <= g + 1 && found < 0; ++c) {
                if (c >= 0 && c < static_cast<std::int64_t>(spec.bin_count()) &&
                    q.bin_value(static_cast<std::uint32_t>(c)) == v) {
                    found = c;
                }
            }
        }
        // Lowest matching bin when rounding collapses neighbours.
        while (found > 0 && q.bin_value(static_cast<std::uint32_t>(found - 1)) == v) {
            --found;
        }
        for (std::uint32_t c = 0; c < spec.bin_count() && found < 0; ++c) {
            if (q.bin_value(c) == v) {
                found = c;
            }
        }
        if (found < 0) {
            throw EncodingError("value at position " + std::to_string(j) + " is not a bin centre");
        }
        q.positions.push_back(static_cast<std::uint32_t>(j));
        q.bins.push_back(static_cast<std::uint16_t>(found));
    }
    return q;
}

}  // namespace tsw
