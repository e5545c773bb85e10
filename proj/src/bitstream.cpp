#include "tsw/bitstream.hpp"

#include <algorithm>
#include <bit>
#include <string>
#include <utility>

#include "tsw/error.hpp"

namespace tsw {

void BitWriter::write_wide(std::uint64_t value, int bits) {
    if (bits < 0 || bits > 64) {
        throw DomainError("field width out of range");
    }
    if (bits < 64 && (value >> bits) != 0) {
        throw EncodingError("value does not fit in " + std::to_string(bits) + " bits");
    }
    write(value >> 32, bits - 32);
    write(value & 0xFFFFFFFFu, 32);
}

void BitWriter::write_f32(float value) { write(std::bit_cast<std::uint32_t>(value), 32); }

std::vector<std::uint8_t> BitWriter::finish() && {
    if (pending_ > 0) {
        bytes_.push_back(static_cast<std::uint8_t>(acc_ << (8 - pending_)));
        pending_ = 0;
    }
    return std::move(bytes_);
}

std::uint64_t BitReader::read(int bits) {
    if (static_cast<std::size_t>(bits) > remaining()) {
        throw CorruptionError("truncated stream", pos_);
    }
    std::uint64_t v = 0;
    while (bits > 0) {
        const int used = static_cast<int>(pos_ % 8);
        const int take = std::min(bits, 8 - used);
        const unsigned byte = bytes_[pos_ / 8];
        v = (v << take) | ((byte >> (8 - used - take)) & ((1u << take) - 1u));
        pos_ += static_cast<std::size_t>(take);
        bits -= take;
    }
    return v;
}

float BitReader::read_f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(read(32))); }

void BitReader::skip_padding() {
    while (pos_ % 8 != 0) {
        const std::size_t at = pos_;
        if (read(1) != 0) {
            throw CorruptionError("nonzero padding bit", at);
        }
    }
}

}  // namespace tsw
