#include "tsw/tswitch.hpp"

#include <cmath>

#include "tsw/error.hpp"

namespace tsw {

std::size_t SwitchModule::nnz() const noexcept {
    std::size_t n = 0;
    for (auto a : mask) {
        n += a;
    }
    return n;
}

std::vector<double> SwitchModule::reconstruct() const {
    std::vector<double> out(mask.size(), 0.0);
    for (std::size_t j = 0; j < mask.size(); ++j) {
        if (mask[j]) {
            out[j] = knob * polarity[j];
        }
    }
    return out;
}

std::vector<std::uint8_t> pulse_mask(std::span<const double> tau, double alpha) {
    const auto gp = sign_quantile(tau, alpha, Sign::Positive);
    const auto gn = sign_quantile(tau, alpha, Sign::Negative);
    std::vector<std::uint8_t> mask(tau.size(), 0);
    for (std::size_t j = 0; j < tau.size(); ++j) {
        const double x = tau[j];
        mask[j] = static_cast<std::uint8_t>((gp && x > 0.0 && x > *gp) || (gn && x < 0.0 && x < *gn));
    }
    return mask;
}

std::vector<std::int8_t> sign_vector(std::span<const double> tau) {
    std::vector<std::int8_t> p(tau.size());
    for (std::size_t j = 0; j < tau.size(); ++j) {
        p[j] = tau[j] > 0.0 ? 1 : -1;
    }
    return p;
}

SwitchModule build_switch(std::span<const double> tau, double alpha) {
    SwitchModule sw;
    sw.mask = pulse_mask(tau, alpha);
    sw.polarity = sign_vector(tau);
    double ss = 0.0;
    std::size_t nnz = 0;
    for (std::size_t j = 0; j < tau.size(); ++j) {
        if (sw.mask[j]) {
            ss += tau[j] * tau[j];
            ++nnz;
        }
    }
    // ||A (.) P||_2 = sqrt(nnz) since |P| = 1 everywhere.
    sw.knob = nnz ? std::sqrt(ss) / std::sqrt(static_cast<double>(nnz)) : 0.0;
    return sw;
}

std::vector<double> pulse_sparsify(std::span<const double> tau, double alpha) {
    const auto mask = pulse_mask(tau, alpha);
    std::vector<double> out(tau.size(), 0.0);
    for (std::size_t j = 0; j < tau.size(); ++j) {
        if (mask[j]) {
            out[j] = tau[j];
        }
    }
    return out;
}

TaskSwitch build_task_switch(const TaskVector& tv, double alpha) {
    TaskSwitch ts;
    ts.task_id = tv.task_id;
    for (const auto& m : tv.delta.modules()) {
        ts.module_names.push_back(m.name);
        ts.modules.push_back(build_switch(m.values, alpha));
    }
    return ts;
}

std::vector<double> apply_switch(std::span<const double> theta, const SwitchModule& sw, double weight) {
    if (theta.size() != sw.size()) {
        throw StructuralError("apply_switch: parameter length " + std::to_string(theta.size()) +
                              " does not match switch length " + std::to_string(sw.size()));
    }
    std::vector<double> out(theta.begin(), theta.end());
    const double s = weight * sw.knob;
    for (std::size_t j = 0; j < out.size(); ++j) {
        if (sw.mask[j]) {
            out[j] += s * sw.polarity[j];
        }
    }
    return out;
}

QuantizedModule to_quantized(const SwitchModule& sw) {
    QuantizedModule q;
    q.size = static_cast<std::uint32_t>(sw.size());
    q.bits = 1;
    q.range_neg = 2.0f;
    q.range_pos = 2.0f;
    q.scale = static_cast<float>(sw.knob);
    for (std::size_t j = 0; j < sw.size(); ++j) {
        if (sw.mask[j]) {
            q.positions.push_back(static_cast<std::uint32_t>(j));
            q.bins.push_back(sw.polarity[j] > 0 ? 1 : 0);
        }
    }
    return q;
}

}  // namespace tsw
