#pragma once

// Module storage formats.
//
// Every module starts with a fixed 137-bit header:
//   format (2) | b (4) | c - 1 (8) | n (27) | scale f32 | range_neg f32 | range_pos f32
// followed by one of three payloads:
//   SASS   group bitmap (n / c bits), then per nonzero in group order:
//          intra-group index (ceil(log2 c) bits), bin (b bits), end-of-group flag (1 bit)
//   INDEP  n mask bits, then b bits per element (zeros carry an all-zero bin)
//   DENSE  n raw float32 values; b, c and the quantizer fields are zero
// A standalone module is zero-padded to a byte boundary.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsw/bas.hpp"
#include "tsw/bitstream.hpp"

namespace tsw {

enum class Format : std::uint8_t { Sass = 0, Indep = 1, Dense = 2 };

std::string to_string(Format f);

inline constexpr int kHeaderBits = 2 + 4 + 8 + 27 + 3 * 32;
inline constexpr int kFormulaHeaderBits = 27 + 8;
inline constexpr std::uint32_t kMaxGroup = 256;
inline constexpr std::uint32_t kMaxElements = 1u << 27;

struct ModuleHeader {
    Format format = Format::Sass;
    int bits = 1;
    std::uint32_t group = 1;
    std::uint32_t size = 0;
    float scale = 0.0f;
    float range_neg = 0.0f;
    float range_pos = 0.0f;

    void write(BitWriter& w) const;
    // Validates field ranges; throws CorruptionError.
    static ModuleHeader read(BitReader& r);
};

// ceil(log2 c)
int index_bits(std::uint32_t c) noexcept;

// Divisors of n that are <= 256, ascending. n = 0 admits only c = 1.
std::vector<std::uint32_t> group_candidates(std::uint32_t n);

/// 35 + n/c + n(1 - alpha)(ceil(log2 c) + b + 1)
double expected_bits(std::uint32_t n, std::uint32_t c, double alpha, int bits);

/// Candidate group size minimizing expected_bits; ties go to the smaller c, alpha = 1 picks
/// the largest candidate.
std::uint32_t optimal_group(std::uint32_t n, double alpha);

/// Candidate closest to the continuous optimum ln2 / (1 - alpha); ties to the smaller c,
/// alpha = 1 gives 256 when it divides n and the largest candidate otherwise.
std::uint32_t nearest_group(std::uint32_t n, double alpha);

std::size_t sass_payload_bits(std::uint32_t n, std::uint32_t c, std::size_t nnz, int bits);
std::size_t indep_payload_bits(std::uint32_t n, int bits);
std::size_t dense_payload_bits(std::uint32_t n);

struct EncodedModule {
    ModuleHeader header;
    std::size_t payload_bits = 0;
    std::vector<std::uint8_t> bytes;  // header + payload + zero padding

    std::size_t total_bits() const noexcept { return kHeaderBits + payload_bits; }
    // The 35-bit count/group header plus payload, as the storage model counts it.
    std::size_t formula_bits() const noexcept { return kFormulaHeaderBits + payload_bits; }
};

// Throws DomainError when c is not a candidate for the module size, EncodingError at n >= 2^27.
void write_sass(BitWriter& w, const QuantizedModule& q, std::uint32_t group);
void write_indep(BitWriter& w, const QuantizedModule& q);
void write_dense(BitWriter& w, std::span<const float> values);

EncodedModule encode_sass(const QuantizedModule& q, std::uint32_t group);
EncodedModule encode_sass(const QuantizedModule& q);  // optimal_group on the achieved sparsity
EncodedModule encode_indep(const QuantizedModule& q);
// Values must be finite; -0 is stored as +0.
EncodedModule encode_dense(std::span<const float> values);

/// Smallest of SASS (optimal group), INDEP and DENSE by total bits; ties prefer that order.
Format choose_format(const QuantizedModule& q);
EncodedModule encode_best(const QuantizedModule& q);

struct DecodedModule {
    ModuleHeader header;
    QuantizedModule quantized;  // SASS and INDEP
    std::vector<float> dense;   // DENSE
    std::size_t payload_bits = 0;

    std::vector<float> values() const;
};

/// Reads header and payload without consuming padding. Rejects any stream that is not the
/// canonical encoding of what it decodes to, so accepted streams re-encode identically.
DecodedModule read_module(BitReader& r);
// Whole buffer must be one module plus zero padding.
DecodedModule decode_module(std::span<const std::uint8_t> bytes);
// Re-encodes with the decoded header's format and group.
EncodedModule reencode(const DecodedModule& m);

}  // namespace tsw
