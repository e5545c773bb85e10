#pragma once
// Small helpers shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "tsw/rng.hpp"

namespace tsw::test {

inline std::vector<double> normal_vector(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    Rng rng(seed);
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = d(rng);
    }
    return v;
}

inline double rel_diff(double a, double b) {
    const double s = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / s;
}

}  // namespace tsw::test
