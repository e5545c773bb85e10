#pragma once

// Learnable gating sparsification. Per module, two threshold logits map through
// phi(x) = atan(x)/pi + 0.5 into the absolute-value range of each sign class; a pair of
// tempered sigmoids then forms the soft mask M, and softplus(kappa) rescales it.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "tsw/autodiff.hpp"
#include "tsw/vector_core.hpp"

namespace tsw {

inline constexpr double kGateDenominatorEps = 1e-12;

struct GateParams {
    double s_pos = 0.0;
    double s_neg = 0.0;
    // softplus(ln(e - 1)) == 1
    double kappa = std::log(std::numbers::e - 1.0);
};

struct Threshold {
    double t = 0.0;
    double r_max = 0.0;
    bool degenerate = false;  // empty sign class
};

template <class S>
S phi(const S& x) {
    return ad::atan(x) / S(std::numbers::pi) + S(0.5);
}

// t = v_min + phi(s) * (v_max - v_min)
template <class S>
S threshold_from_logit(const S& s, double v_min, double v_max) {
    return S(v_min) + phi(s) * S(v_max - v_min);
}

Threshold map_threshold(double s, const SignedBounds& bounds, Sign sign);

template <class S>
struct GateOutput {
    std::vector<S> mask;    // M, elements in (0, 2)
    std::vector<S> scaled;  // softplus(kappa) * M
    double rho = 1.0;
};

/// Soft gate for one module. An empty sign class contributes nothing; r_max = 0 is
/// guarded by kGateDenominatorEps.
template <class S>
GateOutput<S> soft_gate(std::span<const double> tau, const SignedBounds& bounds, const S& s_pos, const S& s_neg,
                        const S& kappa, double rho) {
    GateOutput<S> out;
    out.rho = rho;
    out.mask.reserve(tau.size());
    out.scaled.reserve(tau.size());
    S t_pos(0.0), t_neg(0.0);
    double den_pos = 1.0, den_neg = 1.0;
    if (bounds.has_pos) {
        t_pos = threshold_from_logit(s_pos, bounds.v_min_pos, bounds.v_max_pos);
        den_pos = rho * (bounds.v_max_pos - bounds.v_min_pos) + kGateDenominatorEps;
    }
    if (bounds.has_neg) {
        t_neg = threshold_from_logit(s_neg, bounds.v_min_neg, bounds.v_max_neg);
        den_neg = rho * (bounds.v_max_neg - bounds.v_min_neg) + kGateDenominatorEps;
    }
    const S scale = ad::softplus(kappa);
    for (double x : tau) {
        S m(0.0);
        if (bounds.has_pos) {
            m = ad::sigmoid((S(x) - t_pos) / S(den_pos));
        }
        if (bounds.has_neg) {
            m = m + ad::sigmoid((-t_neg - S(x)) / S(den_neg));
        }
        out.scaled.push_back(scale * m);
        out.mask.push_back(std::move(m));
    }
    return out;
}

GateOutput<double> soft_gate(std::span<const double> tau, const GateParams& gates, double rho);

/// (sum_l ||M_l||_1) / (sum_l n_l), on the unscaled masks.
template <class S>
S sparsity_loss(std::span<const std::vector<S>> masks) {
    std::vector<S> partial;
    std::size_t n = 0;
    for (const auto& m : masks) {
        partial.push_back(ad::sum(std::span<const S>(m)));
        n += m.size();
    }
    if (n == 0) {
        return S(0.0);
    }
    return ad::sum(std::span<const S>(partial)) / S(static_cast<double>(n));
}

// Indicator M > 0.5.
std::vector<std::uint8_t> harden(std::span<const double> mask);

/// init * factor^floor(step / every); defaults give 1.0, 0.9 at step 10, ...
double temperature_schedule(int step, double init = 1.0, double factor = 0.9, int every = 10);

}  // namespace tsw
