#pragma once

// Joint optimization of per-module gate logits (s+, s-, kappa) and bit-width logits.
// Per step the model runs with weights theta + softplus(kappa) * M (.) Q_mix(tau); the
// objective is sparsity + normalized mean bit-width + lambda * alignment loss.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsw/align_loss.hpp"
#include "tsw/bas.hpp"
#include "tsw/container.hpp"
#include "tsw/lgs.hpp"
#include "tsw/mlp.hpp"
#include "tsw/rng.hpp"
#include "tsw/vector_core.hpp"

namespace tsw {

struct TrainConfig {
    int steps = 500;
    std::size_t batch = 32;
    std::size_t exemplars = 100;
    double lr_lgs = 0.05;
    double lr_bas = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    Ppl ppl = Ppl::Kl;
    double lambda = 0.3;
    double kl_temperature = 4.0;
    double rho_init = 1.0;
    double rho_factor = 0.9;
    int rho_every = 10;
    double omega_init = 1.0;
    double omega_factor = 0.9;
    int omega_every = 10;
    double clip_norm = 10.0;
    std::uint64_t seed = 0;

    double rho(int step) const { return temperature_schedule(step, rho_init, rho_factor, rho_every); }
    double omega(int step) const { return temperature_schedule(step, omega_init, omega_factor, omega_every); }
    void validate() const;
};

inline constexpr std::size_t kLeavesPerModule = 7;  // s+, s-, kappa, four bit logits

/// Learnables, flattened module by module as [s+, s-, kappa, w1, w2, w4, w8].
struct TrainState {
    std::vector<double> leaves;

    static TrainState initial(std::size_t modules);
    std::size_t modules() const noexcept { return leaves.size() / kLeavesPerModule; }
    GateParams gates(std::size_t l) const;
    std::array<double, 4> bit_logits(std::size_t l) const;
    static bool is_gate_leaf(std::size_t i) noexcept { return i % kLeavesPerModule < 3; }
};

/// Everything the objective treats as constant for one task.
struct TrainProblem {
    MlpSpec spec;
    ParamSet base;
    TaskVector tau;
    Dataset exemplars;
    OutputBatch reference;  // fine-tuned logits on every exemplar
    std::vector<SignedBounds> bounds;
    std::vector<QuantLadder> ladders;

    static TrainProblem build(const MlpSpec& spec, const ParamSet& base, const ParamSet& fine_tuned,
                              const Dataset& exemplars, const std::string& task_id);
};

template <class S>
struct ObjectiveParts {
    S total;
    S sparsity;
    S bits;
    S performance;
    bool degenerate = false;  // CKA with a zero-variance side
};

/// Objective on the exemplar rows given, at gate temperature rho and bit temperature omega.
template <class S>
ObjectiveParts<S> objective(const TrainProblem& p, std::span<const S> leaves, std::span<const std::size_t> rows,
                            double rho, double omega, const TrainConfig& cfg) {
    const std::size_t L = p.tau.delta.size();
    if (leaves.size() != L * kLeavesPerModule) {
        throw StructuralError("expected " + std::to_string(L * kLeavesPerModule) + " leaves, got " +
                              std::to_string(leaves.size()));
    }
    std::vector<std::vector<S>> weights(L);
    std::vector<std::vector<S>> masks(L);
    std::vector<S> widths;
    for (std::size_t l = 0; l < L; ++l) {
        const auto* w = leaves.data() + l * kLeavesPerModule;
        const auto& tau = p.tau.delta.at(l).values;
        auto gate = soft_gate<S>(tau, p.bounds[l], w[0], w[1], w[2], rho);
        const std::array<S, 4> logits{w[3], w[4], w[5], w[6]};
        const auto q = mixed_quantize(p.ladders[l], logits, omega);
        const auto& theta = p.base.at(l).values;
        weights[l].reserve(tau.size());
        for (std::size_t j = 0; j < tau.size(); ++j) {
            weights[l].push_back(S(theta[j]) + gate.scaled[j] * q[j]);
        }
        masks[l] = std::move(gate.mask);
        widths.push_back(mean_bitwidth(logits, omega));
    }
    std::vector<std::span<const S>> spans(weights.begin(), weights.end());
    const auto logits = forward_batch<S>(p.spec, spans, p.exemplars, rows);
    OutputBatch ref(rows.size(), p.reference.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < ref.cols; ++c) {
            ref(i, c) = p.reference(rows[i], c);
        }
    }
    ObjectiveParts<S> out;
    out.sparsity = sparsity_loss<S>(masks);
    out.bits = ad::sum(std::span<const S>(widths)) / S(static_cast<double>(L * kMaxBitWidth));
    switch (cfg.ppl) {
        case Ppl::Kl: out.performance = kl_loss(ref, logits, cfg.kl_temperature); break;
        case Ppl::Mse: out.performance = mse_loss(ref, logits); break;
        case Ppl::Cka: {
            auto c = cka_loss(ref, logits);
            out.performance = c.loss;
            out.degenerate = c.degenerate;
            break;
        }
    }
    out.total = out.sparsity + out.bits + S(cfg.lambda) * out.performance;
    return out;
}

struct ObjectiveGradient {
    ObjectiveParts<double> parts;
    std::vector<double> grad;
};

ObjectiveGradient objective_gradient(const TrainProblem& p, std::span<const double> leaves,
                                     std::span<const std::size_t> rows, double rho, double omega,
                                     const TrainConfig& cfg);

/// Final sparse quantized task vector: per module survivor bins at the chosen width, scale
/// softplus(kappa), ranges from tau; all quantizer fields rounded to float32.
struct CompressedTaskVector {
    std::string task_id;
    std::vector<std::string> names;
    std::vector<QuantizedModule> modules;

    ParamSet delta() const;
    std::size_t size() const noexcept;
    std::size_t nnz() const noexcept;
    double sparsity() const noexcept;
    // Each module in its cheapest format.
    StoredTask store() const;
};

CompressedTaskVector finalize(const TrainProblem& p, const TrainState& state, double rho);

struct LogRow {
    int step = 0;
    double rho = 0.0;
    double omega = 0.0;
    double total = 0.0;
    double sparsity = 0.0;
    double bits = 0.0;
    double performance = 0.0;
    double hard_sparsity = 0.0;  // fraction of elements with M <= 0.5
};

void write_log_csv(std::ostream& os, std::span<const LogRow> rows);

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, LogRow snapshot) : std::runtime_error(what), snapshot_(snapshot) {}
    const LogRow& snapshot() const noexcept { return snapshot_; }

private:
    LogRow snapshot_;
};

struct TrainResult {
    CompressedTaskVector compressed;
    TrainState state;
    std::vector<LogRow> log;
};

// Exemplar rows drawn without replacement from a dataset, from the run seed.
std::vector<std::size_t> pick_exemplars(std::size_t available, std::size_t count, std::uint64_t seed);

TrainResult train(const TrainProblem& p, const TrainConfig& cfg);

// Accuracy of base + delta.
double evaluate(const MlpSpec& spec, const ParamSet& base, const ParamSet& delta, const Dataset& data);

}  // namespace tsw
