#include "tsw/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "tsw/error.hpp"

namespace tsw {

void TrainConfig::validate() const {
    if (steps < 1) {
        throw DomainError("steps must be at least 1");
    }
    if (batch == 0 || exemplars == 0) {
        throw DomainError("batch and exemplar counts must be positive");
    }
    if (!(lambda >= 0.0)) {
        throw DomainError("lambda must be non-negative");
    }
    if (!(rho_init > 0.0) || !(omega_init > 0.0) || !(rho_factor > 0.0) || !(omega_factor > 0.0)) {
        throw DomainError("temperatures must be positive");
    }
    if (ppl == Ppl::Cka && batch < 2) {
        throw DomainError("CKA needs a batch of at least two");
    }
}

TrainState TrainState::initial(std::size_t modules) {
    TrainState s;
    const GateParams g;
    for (std::size_t l = 0; l < modules; ++l) {
        s.leaves.insert(s.leaves.end(), {g.s_pos, g.s_neg, g.kappa, 0.0, 0.0, 0.0, 0.0});
    }
    return s;
}

GateParams TrainState::gates(std::size_t l) const {
    const auto* w = leaves.data() + l * kLeavesPerModule;
    return GateParams{w[0], w[1], w[2]};
}

std::array<double, 4> TrainState::bit_logits(std::size_t l) const {
    const auto* w = leaves.data() + l * kLeavesPerModule;
    return {w[3], w[4], w[5], w[6]};
}

TrainProblem TrainProblem::build(const MlpSpec& spec, const ParamSet& base, const ParamSet& fine_tuned,
                                 const Dataset& exemplars, const std::string& task_id) {
    spec.check(base);
    spec.check(fine_tuned);
    TrainProblem p;
    p.spec = spec;
    p.base = base;
    p.tau = diff(fine_tuned, base, task_id);
    p.exemplars = exemplars;
    std::vector<std::size_t> all(exemplars.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto spans = module_spans(fine_tuned);
    p.reference = forward_batch<double>(spec, spans, exemplars, all);
    for (const auto& m : p.tau.delta.modules()) {
        p.bounds.push_back(signed_bounds(m.values));
        p.ladders.push_back(QuantLadder::build(m.values));
    }
    return p;
}

ObjectiveGradient objective_gradient(const TrainProblem& p, std::span<const double> leaves,
                                     std::span<const std::size_t> rows, double rho, double omega,
                                     const TrainConfig& cfg) {
    ad::Tape tape;
    const auto vars = tape.leaves(leaves);
    const auto parts = objective<ad::Var>(p, vars, rows, rho, omega, cfg);
    const auto g = tape.backward(parts.total);
    ObjectiveGradient out;
    out.parts = ObjectiveParts<double>{parts.total.value(), parts.sparsity.value(), parts.bits.value(),
                                       parts.performance.value(), parts.degenerate};
    out.grad = g.of(vars);
    return out;
}

ParamSet CompressedTaskVector::delta() const {
    ParamSet d;
    for (std::size_t l = 0; l < modules.size(); ++l) {
        d.add(names.at(l), modules[l].values_f64());
    }
    return d;
}

std::size_t CompressedTaskVector::size() const noexcept {
    std::size_t n = 0;
    for (const auto& m : modules) {
        n += m.size;
    }
    return n;
}

std::size_t CompressedTaskVector::nnz() const noexcept {
    std::size_t n = 0;
    for (const auto& m : modules) {
        n += m.nnz();
    }
    return n;
}

double CompressedTaskVector::sparsity() const noexcept {
    const auto n = size();
    return n == 0 ? 1.0 : 1.0 - static_cast<double>(nnz()) / static_cast<double>(n);
}

StoredTask CompressedTaskVector::store() const {
    StoredTask t{task_id, {}};
    for (const auto& m : modules) {
        t.modules.push_back(encode_best(m));
    }
    return t;
}

CompressedTaskVector finalize(const TrainProblem& p, const TrainState& state, double rho) {
    CompressedTaskVector out;
    out.task_id = p.tau.task_id;
    for (std::size_t l = 0; l < p.tau.delta.size(); ++l) {
        const auto& m = p.tau.delta.at(l);
        const auto gates = state.gates(l);
        const auto gate = soft_gate<double>(m.values, p.bounds[l], gates.s_pos, gates.s_neg, gates.kappa, rho);
        const auto mask = harden(gate.mask);
        const int bits = select_bitwidth(state.bit_logits(l));
        const auto spec = QuantSpec::from_values(m.values, bits);
        out.names.push_back(m.name);
        out.modules.push_back(quantize_masked(m.values, mask, bits, static_cast<float>(spec.range_neg),
                                              static_cast<float>(spec.range_pos),
                                              static_cast<float>(ad::softplus(gates.kappa))));
    }
    return out;
}

void write_log_csv(std::ostream& os, std::span<const LogRow> rows) {
    os << "step,rho,omega,total,sparsity_term,bit_term,performance,hard_sparsity\n";
    for (const auto& r : rows) {
        os << r.step << ',' << r.rho << ',' << r.omega << ',' << r.total << ',' << r.sparsity << ',' << r.bits << ','
           << r.performance << ',' << r.hard_sparsity << '\n';
    }
}

std::vector<std::size_t> pick_exemplars(std::size_t available, std::size_t count, std::uint64_t seed) {
    if (count > available) {
        throw DomainError("asked for " + std::to_string(count) + " exemplars from " + std::to_string(available) +
                          " rows");
    }
    std::vector<std::size_t> rows(available);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    auto rng = make_rng(seed, "exemplars");
    // Partial Fisher-Yates with explicit draws keeps the sequence library-independent.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (available - i));
        std::swap(rows[i], rows[j]);
    }
    rows.resize(count);
    return rows;
}

namespace {

double hard_sparsity(const TrainProblem& p, const TrainState& s, double rho) {
    std::size_t zeros = 0, n = 0;
    for (std::size_t l = 0; l < p.tau.delta.size(); ++l) {
        const auto g = s.gates(l);
        const auto& tau = p.tau.delta.at(l).values;
        const auto gate = soft_gate<double>(tau, p.bounds[l], g.s_pos, g.s_neg, g.kappa, rho);
        for (double m : gate.mask) {
            zeros += m <= 0.5;
        }
        n += tau.size();
    }
    return n == 0 ? 1.0 : static_cast<double>(zeros) / static_cast<double>(n);
}

}  // namespace

TrainResult train(const TrainProblem& p, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t N = p.exemplars.size();
    if (N == 0) {
        throw DomainError("no exemplars");
    }
    TrainResult result;
    result.state = TrainState::initial(p.tau.delta.size());
    auto& x = result.state.leaves;
    std::vector<double> m1(x.size(), 0.0), m2(x.size(), 0.0);
    auto rng = make_rng(cfg.seed, "batches");
    std::vector<std::size_t> rows(cfg.batch);
    for (int step = 0; step < cfg.steps; ++step) {
        for (auto& r : rows) {
            r = static_cast<std::size_t>(rng() % N);
        }
        const double rho = cfg.rho(step);
        const double omega = cfg.omega(step);
        auto eval = objective_gradient(p, x, rows, rho, omega, cfg);
        LogRow row{step, rho, omega, eval.parts.total, eval.parts.sparsity, eval.parts.bits,
                   eval.parts.performance, hard_sparsity(p, result.state, rho)};
        const bool finite = std::isfinite(eval.parts.total) &&
                            std::ranges::all_of(eval.grad, [](double g) { return std::isfinite(g); });
        if (!finite) {
            throw TrainingDiverged("objective diverged at step " + std::to_string(step), row);
        }
        result.log.push_back(row);
        auto& g = eval.grad;
        const double norm = std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
        if (norm > cfg.clip_norm) {
            for (double& v : g) {
                v *= cfg.clip_norm / norm;
            }
        }
        const double t = static_cast<double>(step + 1);
        const double c1 = 1.0 - std::pow(cfg.beta1, t);
        const double c2 = 1.0 - std::pow(cfg.beta2, t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g[i];
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double lr = TrainState::is_gate_leaf(i) ? cfg.lr_lgs : cfg.lr_bas;
            x[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam_eps);
        }
    }
    result.compressed = finalize(p, result.state, cfg.rho(cfg.steps));
    return result;
}

double evaluate(const MlpSpec& spec, const ParamSet& base, const ParamSet& delta, const Dataset& data) {
    return accuracy(spec, apply_delta(base, delta), data);
}

}  // namespace tsw
