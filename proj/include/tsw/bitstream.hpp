#pragma once

// MSB-first bit packing. Fields are written most-significant bit first and concatenated
// without gaps; finish() zero-pads to the next byte.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tsw {

class BitWriter {
public:
    void write(std::uint64_t value, int bits) {
        if (bits < 0 || bits > 56 || (value >> bits) != 0) {
            write_wide(value, bits);
            return;
        }
        // fewer than 8 bits are pending, so the accumulator never overflows
        acc_ = (acc_ << bits) | value;
        pending_ += bits;
        bits_ += static_cast<std::size_t>(bits);
        while (pending_ >= 8) {
            pending_ -= 8;
            bytes_.push_back(static_cast<std::uint8_t>(acc_ >> pending_));
        }
    }
    void write_bit(bool bit) { write(bit ? 1u : 0u, 1); }
    void write_f32(float value);

    std::size_t bit_count() const noexcept { return bits_; }
    std::vector<std::uint8_t> finish() &&;

private:
    void write_wide(std::uint64_t value, int bits);

    std::vector<std::uint8_t> bytes_;
    std::uint64_t acc_ = 0;
    int pending_ = 0;
    std::size_t bits_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> bytes, std::size_t bit_offset = 0)
        : bytes_(bytes), pos_(bit_offset) {}

    // Throws CorruptionError past the end of the buffer.
    std::uint64_t read(int bits);
    bool read_bit() { return read(1) != 0; }
    float read_f32();
    // Skips to the next byte boundary; the skipped bits must be zero.
    void skip_padding();

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() * 8 - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
};

}  // namespace tsw
