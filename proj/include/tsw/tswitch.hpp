#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsw/bas.hpp"
#include "tsw/vector_core.hpp"

namespace tsw {

/// One module of a T-Switch: activation mask A, polarity P (full length), knob beta.
/// Reconstruction is beta * A (.) P.
struct SwitchModule {
    std::vector<std::uint8_t> mask;
    std::vector<std::int8_t> polarity;
    double knob = 0.0;

    std::size_t size() const noexcept { return mask.size(); }
    std::size_t nnz() const noexcept;
    std::vector<double> reconstruct() const;
};

struct TaskSwitch {
    std::string task_id;
    std::vector<std::string> module_names;
    std::vector<SwitchModule> modules;
};

// Impulse activation: 1 where tau > gamma+ or tau < gamma-, with nearest-rank gammas at rate alpha.
std::vector<std::uint8_t> pulse_mask(std::span<const double> tau, double alpha);

// +1 where tau > 0, -1 otherwise (zero maps to -1).
std::vector<std::int8_t> sign_vector(std::span<const double> tau);

// Knob beta = ||tau (.) A|| / sqrt(nnz(A)); zero when nothing survives.
SwitchModule build_switch(std::span<const double> tau, double alpha);

// P-Spar only: tau (.) pulse_mask(tau, alpha).
std::vector<double> pulse_sparsify(std::span<const double> tau, double alpha);

TaskSwitch build_task_switch(const TaskVector& tv, double alpha);

// theta + weight * beta * (A (.) P).
std::vector<double> apply_switch(std::span<const double> theta, const SwitchModule& sw, double weight);

// Codec form: b = 1, quantizer range (2, 2) puts the two bin centres at -1 and +1, scale = beta.
QuantizedModule to_quantized(const SwitchModule& sw);

}  // namespace tsw
