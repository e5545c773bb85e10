#pragma once

// Bit-width adaptive selection: the asymmetric uniform quantizer, the softmax mixture over
// candidate widths, and the codec-facing QuantizedModule.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tsw/autodiff.hpp"

namespace tsw {

inline constexpr std::array<int, 4> kBitWidths{1, 2, 4, 8};
inline constexpr int kMaxBitWidth = 8;

bool is_supported_bitwidth(int bits) noexcept;

/// Uniform grid of 2^b bins spanning [-range_neg, range_pos].
struct QuantSpec {
    int bits = 1;
    double range_neg = 0.0;
    double range_pos = 0.0;

    double step() const noexcept;
    std::uint32_t bin_count() const noexcept { return 1u << bits; }
    double center(std::uint32_t index) const noexcept;
    bool degenerate() const noexcept { return step() == 0.0; }

    // Ranges from the largest magnitudes of each sign; zero for an empty sign class.
    static QuantSpec from_values(std::span<const double> v, int bits);
};

// Clamp(ceil((x + range_neg) / step), 1, 2^b) - 1. Always inside [0, 2^b - 1].
std::uint32_t quantize_index(double x, const QuantSpec& spec) noexcept;

struct Quantized {
    std::vector<double> values;
    std::vector<std::uint32_t> indices;
};

Quantized quantize(std::span<const double> v, const QuantSpec& spec);

/// Quantizations of one vector at every candidate width, shared ranges.
struct QuantLadder {
    double range_neg = 0.0;
    double range_pos = 0.0;
    std::array<std::vector<double>, kBitWidths.size()> levels;

    static QuantLadder build(std::span<const double> v, double range_neg, double range_pos);
    static QuantLadder build(std::span<const double> v);
};

template <class S>
std::array<S, 4> bit_probabilities(const std::array<S, 4>& logits, double omega) {
    std::array<S, 4> scaled;
    for (std::size_t i = 0; i < 4; ++i) {
        scaled[i] = logits[i] / S(omega);
    }
    const S lse = ad::log_sum_exp(std::span<const S>(scaled));
    std::array<S, 4> p;
    for (std::size_t i = 0; i < 4; ++i) {
        p[i] = ad::exp(scaled[i] - lse);
    }
    return p;
}

/// Sum_i softmax(w / omega)_i * Q(v; W_i). Gradients reach the logits only; the ladder is constant.
template <class S>
std::vector<S> mixed_quantize(const QuantLadder& ladder, const std::array<S, 4>& logits, double omega) {
    const auto p = bit_probabilities(logits, omega);
    const std::size_t n = ladder.levels[0].size();
    std::vector<S> out;
    out.reserve(n);
    std::array<S, 4> q;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < 4; ++i) {
            q[i] = S(ladder.levels[i][j]);
        }
        out.push_back(ad::dot(std::span<const S>(p), std::span<const S>(q)));
    }
    return out;
}

std::vector<double> mixed_quantize(std::span<const double> v, const std::array<double, 4>& logits, double omega);

/// Mixed quantization with a straight-through pass toward v: d out_j / d v_j = 1 inside
/// [-range_neg, range_pos] and 0 outside. Ranges are taken as constants.
std::vector<ad::Var> mixed_quantize_ste(std::span<const ad::Var> v, double range_neg, double range_pos,
                                        const std::array<ad::Var, 4>& logits, double omega);

template <class S>
S mean_bitwidth(const std::array<S, 4>& logits, double omega) {
    const auto p = bit_probabilities(logits, omega);
    S m(0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        m = m + p[i] * S(static_cast<double>(kBitWidths[i]));
    }
    return m;
}

// argmax of the logits; ties go to the smaller width.
int select_bitwidth(const std::array<double, 4>& logits) noexcept;

/// A masked, quantized module as stored by the codec: survivor positions with their bin
/// indices, plus the float32 quantizer parameters. Element values are
/// float(scale * centre(bin)) at survivors and +0 elsewhere.
struct QuantizedModule {
    std::uint32_t size = 0;
    int bits = 1;
    float scale = 1.0f;
    float range_neg = 0.0f;
    float range_pos = 0.0f;
    std::vector<std::uint32_t> positions;
    std::vector<std::uint16_t> bins;

    QuantSpec spec() const noexcept { return QuantSpec{bits, range_neg, range_pos}; }
    std::size_t nnz() const noexcept { return positions.size(); }
    double sparsity() const noexcept;
    float bin_value(std::uint32_t bin) const noexcept;
    std::vector<float> values() const;
    std::vector<double> values_f64() const;

    // Throws StructuralError on unsorted/out-of-range positions, bad bins or widths.
    void validate() const;

    friend bool operator==(const QuantizedModule&, const QuantizedModule&) = default;
};

// Quantizes v at survivor positions with float32-rounded ranges.
QuantizedModule quantize_masked(std::span<const double> v, std::span<const std::uint8_t> mask, int bits,
                                float range_neg, float range_pos, float scale);

// Inverse of QuantizedModule::values(). Nonzero values off every bin value throw EncodingError.
QuantizedModule from_values(std::span<const float> values, int bits, float range_neg, float range_pos, float scale);

}  // namespace tsw
