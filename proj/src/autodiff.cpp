#include "tsw/autodiff.hpp"

#include <algorithm>
#include <limits>

#include "tsw/error.hpp"

namespace tsw::ad {

Var Tape::leaf(double value) {
    Var v(value);
    v.tape_ = this;
    v.index_ = static_cast<std::int64_t>(values_.size());
    values_.push_back(value);
    first_edge_.push_back(parents_.size());
    edge_counts_.push_back(0);
    is_leaf_.push_back(1);
    return v;
}

std::vector<Var> Tape::leaves(std::span<const double> values) {
    std::vector<Var> out;
    out.reserve(values.size());
    for (double x : values) {
        out.push_back(leaf(x));
    }
    return out;
}

Var Tape::record(double value, std::span<const Edge> edges) {
    const auto first = parents_.size();
    std::uint32_t count = 0;
    for (const auto& e : edges) {
        if (e.parent.is_constant()) {
            continue;
        }
        if (e.parent.tape_ != this) {
            throw StructuralError("operand recorded on a different tape");
        }
        parents_.push_back(static_cast<std::uint32_t>(e.parent.index_));
        partials_.push_back(e.partial);
        ++count;
    }
    if (count == 0) {
        return Var(value);
    }
    Var v(value);
    v.tape_ = this;
    v.index_ = static_cast<std::int64_t>(values_.size());
    values_.push_back(value);
    first_edge_.push_back(first);
    edge_counts_.push_back(count);
    is_leaf_.push_back(0);
    return v;
}

Gradient Tape::backward(const Var& output) const {
    Gradient g;
    g.tape_ = this;
    g.adjoint_.assign(values_.size(), 0.0);
    if (output.is_constant()) {
        return g;
    }
    if (output.tape_ != this) {
        throw StructuralError("output was recorded on a different tape");
    }
    g.adjoint_[static_cast<std::size_t>(output.index_)] = 1.0;
    for (std::size_t i = static_cast<std::size_t>(output.index_) + 1; i-- > 0;) {
        const double a = g.adjoint_[i];
        if (a == 0.0) {
            continue;
        }
        const auto first = first_edge_[i];
        for (std::uint32_t e = 0; e < edge_counts_[i]; ++e) {
            g.adjoint_[parents_[first + e]] += a * partials_[first + e];
        }
    }
    return g;
}

void Tape::clear() noexcept {
    values_.clear();
    first_edge_.clear();
    edge_counts_.clear();
    parents_.clear();
    partials_.clear();
    is_leaf_.clear();
}

double Gradient::operator[](const Var& v) const {
    if (v.is_constant()) {
        throw StructuralError("gradient requested for a constant");
    }
    if (v.tape() != tape_) {
        throw StructuralError("gradient requested for a variable not on this tape");
    }
    const auto i = static_cast<std::size_t>(v.index());
    if (i >= adjoint_.size() || !tape_->is_leaf_[i]) {
        throw StructuralError("gradient requested for a non-leaf node");
    }
    return adjoint_[i];
}

std::vector<double> Gradient::of(std::span<const Var> vs) const {
    std::vector<double> out;
    out.reserve(vs.size());
    for (const auto& v : vs) {
        out.push_back((*this)[v]);
    }
    return out;
}

Tape* common_tape(const Var& a, const Var& b) {
    if (a.tape() && b.tape() && a.tape() != b.tape()) {
        throw StructuralError("operands recorded on different tapes");
    }
    return a.tape() ? a.tape() : b.tape();
}

namespace {

Var unary(const Var& x, double value, double partial) {
    if (x.is_constant()) {
        return Var(value);
    }
    return x.tape()->record(value, {Edge{x, partial}});
}

Var binary(const Var& a, const Var& b, double value, double da, double db) {
    Tape* t = common_tape(a, b);
    if (t == nullptr) {
        return Var(value);
    }
    return t->record(value, {Edge{a, da}, Edge{b, db}});
}

}  // namespace

Var operator+(const Var& a, const Var& b) { return binary(a, b, a.value() + b.value(), 1.0, 1.0); }
Var operator-(const Var& a, const Var& b) { return binary(a, b, a.value() - b.value(), 1.0, -1.0); }
Var operator*(const Var& a, const Var& b) {
    return binary(a, b, a.value() * b.value(), b.value(), a.value());
}
Var operator/(const Var& a, const Var& b) {
    const double inv = 1.0 / b.value();
    const double q = a.value() * inv;
    return binary(a, b, q, inv, -q * inv);
}
Var operator-(const Var& a) { return unary(a, -a.value(), -1.0); }

Var exp(const Var& x) {
    const double e = std::exp(x.value());
    return unary(x, e, e);
}
Var log(const Var& x) { return unary(x, std::log(x.value()), 1.0 / x.value()); }
Var sqrt(const Var& x) {
    const double s = std::sqrt(x.value());
    return unary(x, s, s > 0.0 ? 0.5 / s : 0.0);
}
Var tanh(const Var& x) {
    const double t = std::tanh(x.value());
    return unary(x, t, 1.0 - t * t);
}
Var atan(const Var& x) { return unary(x, std::atan(x.value()), 1.0 / (1.0 + x.value() * x.value())); }
Var sigmoid(const Var& x) {
    const double s = sigmoid(x.value());
    return unary(x, s, s * (1.0 - s));
}
Var softplus(const Var& x) { return unary(x, softplus(x.value()), sigmoid(x.value())); }
Var relu(const Var& x) { return unary(x, relu(x.value()), x.value() > 0.0 ? 1.0 : 0.0); }
Var square(const Var& x) { return unary(x, x.value() * x.value(), 2.0 * x.value()); }

double sum(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) {
        s += x;
    }
    return s;
}

namespace {

Tape* tape_of(std::span<const Var> xs) {
    Tape* t = nullptr;
    for (const auto& x : xs) {
        if (x.tape()) {
            if (t && x.tape() != t) {
                throw StructuralError("operands recorded on different tapes");
            }
            t = x.tape();
        }
    }
    return t;
}

}  // namespace

Var sum(std::span<const Var> xs) {
    Tape* t = tape_of(xs);
    double s = 0.0;
    for (const auto& x : xs) {
        s += x.value();
    }
    if (!t) {
        return Var(s);
    }
    std::vector<Edge> edges;
    edges.reserve(xs.size());
    for (const auto& x : xs) {
        edges.push_back(Edge{x, 1.0});
    }
    return t->record(s, edges);
}

Var dot(std::span<const Var> a, std::span<const Var> b) {
    if (a.size() != b.size()) {
        throw StructuralError("dot: length mismatch");
    }
    Tape* ta = tape_of(a);
    Tape* tb = tape_of(b);
    if (ta && tb && ta != tb) {
        throw StructuralError("operands recorded on different tapes");
    }
    Tape* t = ta ? ta : tb;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i].value() * b[i].value();
    }
    if (!t) {
        return Var(s);
    }
    std::vector<Edge> edges;
    edges.reserve(2 * a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        edges.push_back(Edge{a[i], b[i].value()});
        edges.push_back(Edge{b[i], a[i].value()});
    }
    return t->record(s, edges);
}

Var dot(std::span<const Var> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw StructuralError("dot: length mismatch");
    }
    Tape* t = tape_of(a);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i].value() * b[i];
    }
    if (!t) {
        return Var(s);
    }
    std::vector<Edge> edges;
    edges.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        edges.push_back(Edge{a[i], b[i]});
    }
    return t->record(s, edges);
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw StructuralError("dot: length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double log_sum_exp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) {
        m = std::max(m, x);
    }
    double s = 0.0;
    for (double x : xs) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

Var log_sum_exp(std::span<const Var> xs) {
    Tape* t = tape_of(xs);
    std::vector<double> vals(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        vals[i] = xs[i].value();
    }
    const double lse = log_sum_exp(std::span<const double>(vals));
    if (!t) {
        return Var(lse);
    }
    std::vector<Edge> edges;
    edges.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        edges.push_back(Edge{xs[i], std::exp(vals[i] - lse)});
    }
    return t->record(lse, edges);
}

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    return std::fabs(analytic - numeric) / denom;
}

FdReport fd_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                  std::span<const double> analytic, double h, double floor) {
    if (x.size() != analytic.size()) {
        throw StructuralError("fd_check: gradient length mismatch");
    }
    FdReport r;
    std::vector<double> p(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        p[i] = x[i] + h;
        const double fp = f(p);
        p[i] = x[i] - h;
        const double fm = f(p);
        p[i] = x[i];
        const double g = (fp - fm) / (2.0 * h);
        const double e = relative_error(analytic[i], g, floor);
        r.numeric.push_back(g);
        r.rel_errors.push_back(e);
        r.max_rel_error = std::max(r.max_rel_error, e);
        r.mean_rel_error += e;
    }
    if (!x.empty()) {
        r.mean_rel_error /= static_cast<double>(x.size());
    }
    return r;
}

}  // namespace tsw::ad
