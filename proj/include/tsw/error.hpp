#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tsw {

// Shapes or module lists that do not line up.
class StructuralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Input that cannot be represented by the chosen encoding.
class EncodingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CorruptionError : public std::runtime_error {
public:
    CorruptionError(const std::string& what, std::size_t bit_offset)
        : std::runtime_error(what + " (bit offset " + std::to_string(bit_offset) + ")"),
          bit_offset_(bit_offset) {}

    std::size_t bit_offset() const noexcept { return bit_offset_; }

private:
    std::size_t bit_offset_;
};

}  // namespace tsw
