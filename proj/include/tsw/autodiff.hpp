#pragma once

// Minimal reverse-mode differentiation over scalars.
//
// A Var is either a constant (no tape) or a node recorded on a Tape. Nodes are appended in
// evaluation order, so the node index is already a topological order; backward() walks it once
// in reverse. Each node stores its parents and the local partial derivative toward each.
//
// Generic numeric code in this library is written as templates over S in {double, Var};
// the math functions below are overloaded for both so one code path serves evaluation and
// differentiation.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace tsw::ad {

class Tape;

class Var {
public:
    Var() = default;
    Var(double v) : value_(v) {}  // NOLINT: constants convert implicitly

    double value() const noexcept { return value_; }
    bool is_constant() const noexcept { return tape_ == nullptr; }
    Tape* tape() const noexcept { return tape_; }
    std::int64_t index() const noexcept { return index_; }

private:
    friend class Tape;
    double value_ = 0.0;
    std::int64_t index_ = -1;
    Tape* tape_ = nullptr;
};

struct Edge {
    Var parent;
    double partial;
};

class Gradient;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(double value);
    std::vector<Var> leaves(std::span<const double> values);

    // Records value with the given (parent, d value / d parent) pairs. Constant parents are dropped;
    // if every parent is constant the result is a constant.
    Var record(double value, std::span<const Edge> edges);
    Var record(double value, std::initializer_list<Edge> edges) {
        return record(value, std::span<const Edge>(edges.begin(), edges.size()));
    }

    Gradient backward(const Var& output) const;

    void clear() noexcept;
    std::size_t node_count() const noexcept { return first_edge_.size(); }
    std::size_t edge_count() const noexcept { return parents_.size(); }

private:
    friend class Gradient;
    std::vector<double> values_;
    std::vector<std::uint64_t> first_edge_;
    std::vector<std::uint32_t> edge_counts_;
    std::vector<std::uint32_t> parents_;
    std::vector<double> partials_;
    std::vector<std::uint8_t> is_leaf_;
};

class Gradient {
public:
    // Throws StructuralError when the Var is constant or belongs to another tape.
    double operator[](const Var& v) const;
    std::vector<double> of(std::span<const Var> vs) const;

private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    std::vector<double> adjoint_;
};

// Picks the tape of whichever operand has one; throws StructuralError on two different tapes.
Tape* common_tape(const Var& a, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

inline bool operator<(const Var& a, const Var& b) noexcept { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) noexcept { return a.value() > b.value(); }

inline double value_of(double x) noexcept { return x; }
inline double value_of(const Var& x) noexcept { return x.value(); }

Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var tanh(const Var& x);
Var atan(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var relu(const Var& x);
Var square(const Var& x);

inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double atan(double x) { return std::atan(x); }
inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double square(double x) { return x * x; }

// One node per call, whatever the length.
Var sum(std::span<const Var> xs);
Var dot(std::span<const Var> a, std::span<const Var> b);
Var dot(std::span<const Var> a, std::span<const double> b);
double sum(std::span<const double> xs);
double dot(std::span<const double> a, std::span<const double> b);

// Max-shifted log(sum(exp(x))).
Var log_sum_exp(std::span<const Var> xs);
double log_sum_exp(std::span<const double> xs);

struct FdReport {
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    std::vector<double> rel_errors;
    std::vector<double> numeric;
};

// |a - b| / max(|a|, |b|, floor); floor keeps near-zero gradients from dominating.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central differences of f at x, compared against an analytic gradient.
FdReport fd_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                  std::span<const double> analytic, double h = 1e-5, double floor = 1e-6);

}  // namespace tsw::ad
