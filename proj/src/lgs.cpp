#include "tsw/lgs.hpp"

#include "tsw/error.hpp"

namespace tsw {

Threshold map_threshold(double s, const SignedBounds& bounds, Sign sign) {
    const bool present = sign == Sign::Positive ? bounds.has_pos : bounds.has_neg;
    if (!present) {
        return Threshold{0.0, 0.0, true};
    }
    const double lo = sign == Sign::Positive ? bounds.v_min_pos : bounds.v_min_neg;
    const double hi = sign == Sign::Positive ? bounds.v_max_pos : bounds.v_max_neg;
    return Threshold{threshold_from_logit(s, lo, hi), hi - lo, false};
}

GateOutput<double> soft_gate(std::span<const double> tau, const GateParams& gates, double rho) {
    if (!(rho > 0.0)) {
        throw DomainError("gate temperature must be positive");
    }
    return soft_gate<double>(tau, signed_bounds(tau), gates.s_pos, gates.s_neg, gates.kappa, rho);
}

std::vector<std::uint8_t> harden(std::span<const double> mask) {
    std::vector<std::uint8_t> out(mask.size());
    for (std::size_t j = 0; j < mask.size(); ++j) {
        out[j] = mask[j] > 0.5 ? 1 : 0;
    }
    return out;
}

double temperature_schedule(int step, double init, double factor, int every) {
    if (step < 0 || every <= 0) {
        throw DomainError("temperature schedule needs step >= 0 and a positive period");
    }
    return init * std::pow(factor, static_cast<double>(step / every));
}

}  // namespace tsw
