#include "tsw/vector_core.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "tsw/error.hpp"

namespace tsw {

void ParamSet::add(std::string name, std::vector<double> values) {
    if (values.empty()) {
        throw StructuralError("module '" + name + "' has no elements");
    }
    if (find(name) != nullptr) {
        throw StructuralError("duplicate module name '" + name + "'");
    }
    modules_.push_back(Module{std::move(name), std::move(values)});
}

std::size_t ParamSet::total_size() const noexcept {
    std::size_t n = 0;
    for (const auto& m : modules_) {
        n += m.values.size();
    }
    return n;
}

const Module* ParamSet::find(std::string_view name) const noexcept {
    for (const auto& m : modules_) {
        if (m.name == name) {
            return &m;
        }
    }
    return nullptr;
}

void ParamSet::require_aligned(const ParamSet& other) const {
    if (modules_.size() != other.modules_.size()) {
        throw StructuralError("module count mismatch: " + std::to_string(modules_.size()) + " vs " +
                              std::to_string(other.modules_.size()));
    }
    for (std::size_t i = 0; i < modules_.size(); ++i) {
        const auto& a = modules_[i];
        const auto& b = other.modules_[i];
        if (a.name != b.name) {
            throw StructuralError("module " + std::to_string(i) + " name mismatch: '" + a.name + "' vs '" +
                                  b.name + "'");
        }
        if (a.values.size() != b.values.size()) {
            throw StructuralError("module '" + a.name + "' length mismatch: " + std::to_string(a.values.size()) +
                                  " vs " + std::to_string(b.values.size()));
        }
    }
}

bool operator==(const ParamSet& a, const ParamSet& b) noexcept {
    if (a.modules_.size() != b.modules_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.modules_.size(); ++i) {
        if (a.modules_[i].name != b.modules_[i].name || a.modules_[i].values != b.modules_[i].values) {
            return false;
        }
    }
    return true;
}

TaskVector diff(const ParamSet& fine_tuned, const ParamSet& base, std::string task_id) {
    fine_tuned.require_aligned(base);
    TaskVector tv{std::move(task_id), {}};
    for (std::size_t i = 0; i < base.size(); ++i) {
        const auto& ft = fine_tuned.at(i).values;
        const auto& b = base.at(i).values;
        std::vector<double> d(b.size());
        for (std::size_t j = 0; j < b.size(); ++j) {
            d[j] = ft[j] - b[j];
        }
        tv.delta.add(base.at(i).name, std::move(d));
    }
    return tv;
}

ParamSet apply_delta(const ParamSet& base, const ParamSet& delta, double scale) {
    base.require_aligned(delta);
    ParamSet out = base;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& v = out.at(i).values;
        const auto& d = delta.at(i).values;
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] += scale * d[j];
        }
    }
    return out;
}

SignedBounds signed_bounds(std::span<const double> v) noexcept {
    SignedBounds sb;
    for (double x : v) {
        if (x > 0.0) {
            if (!sb.has_pos) {
                sb.v_min_pos = sb.v_max_pos = x;
                sb.has_pos = true;
            } else {
                sb.v_min_pos = std::min(sb.v_min_pos, x);
                sb.v_max_pos = std::max(sb.v_max_pos, x);
            }
        } else if (x < 0.0) {
            const double a = -x;
            if (!sb.has_neg) {
                sb.v_min_neg = sb.v_max_neg = a;
                sb.has_neg = true;
            } else {
                sb.v_min_neg = std::min(sb.v_min_neg, a);
                sb.v_max_neg = std::max(sb.v_max_neg, a);
            }
        }
    }
    return sb;
}

std::optional<double> sign_quantile(std::span<const double> v, double alpha, Sign sign) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw DomainError("quantile fraction must lie in [0, 1]");
    }
    std::vector<double> mags;
    for (double x : v) {
        if (sign == Sign::Positive ? x > 0.0 : x < 0.0) {
            mags.push_back(std::fabs(x));
        }
    }
    if (mags.empty()) {
        return std::nullopt;
    }
    // 1e-9 absorbs products like 0.29 * 100 = 28.999999999999996.
    const auto m = mags.size();
    const auto k = std::min(m, static_cast<std::size_t>(std::floor(alpha * static_cast<double>(m) + 1e-9)));
    if (k == 0) {
        return 0.0;
    }
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1), mags.end());
    const double g = mags[k - 1];
    return sign == Sign::Positive ? g : -g;
}

double l2_norm(std::span<const double> v) noexcept {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

void write_text(std::ostream& os, const ParamSet& params) {
    const auto old = os.precision(17);
    for (const auto& m : params.modules()) {
        os << "module " << m.name << ' ' << m.values.size() << '\n';
        for (std::size_t j = 0; j < m.values.size(); ++j) {
            os << (j ? " " : "") << m.values[j];
        }
        os << '\n';
    }
    os.precision(old);
}

ParamSet read_text(std::istream& is) {
    ParamSet ps;
    std::string tag;
    while (is >> tag) {
        if (tag != "module") {
            throw StructuralError("expected 'module', got '" + tag + "'");
        }
        std::string name;
        std::size_t n = 0;
        if (!(is >> name >> n)) {
            throw StructuralError("truncated module header");
        }
        std::vector<double> values(n);
        for (auto& x : values) {
            if (!(is >> x)) {
                throw StructuralError("truncated values for module '" + name + "'");
            }
        }
        ps.add(std::move(name), std::move(values));
    }
    return ps;
}

}  // namespace tsw
