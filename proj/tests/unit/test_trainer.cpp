#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "support.hpp"
#include "tsw/container.hpp"
#include "tsw/error.hpp"
#include "tsw/harness.hpp"
#include "tsw/trainer.hpp"

using namespace tsw;
using tsw::test::normal_vector;

namespace {

struct Fixture {
    MlpSpec spec;
    ParamSet base;
    ParamSet tuned;
    Dataset exemplars;
};

Fixture small_fixture(std::uint64_t seed) {
    Fixture f;
    f.spec.widths = {4, 6, 3};
    f.base = f.spec.init(seed);
    f.tuned = f.base;
    std::uint64_t k = 0;
    for (auto& m : f.tuned.modules()) {
        const auto d = normal_vector(m.values.size(), seed * 100 + k++, 0.3);
        for (std::size_t j = 0; j < d.size(); ++j) {
            m.values[j] += d[j];
        }
    }
    f.exemplars.dim = 4;
    const auto x = normal_vector(40 * 4, seed + 999, 1.5);
    for (std::size_t i = 0; i < 40; ++i) {
        f.exemplars.add(std::span<const double>(x.data() + 4 * i, 4), 0);
    }
    return f;
}

TrainProblem problem(const Fixture& f) { return TrainProblem::build(f.spec, f.base, f.tuned, f.exemplars, "t"); }

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = i;
    }
    return r;
}

}  // namespace

TEST_CASE("objective components at initialization") {
    const auto f = small_fixture(1);
    const auto p = problem(f);
    const auto s = TrainState::initial(p.tau.delta.size());
    CHECK(s.leaves.size() == 4 * kLeavesPerModule);
    TrainConfig cfg;
    const auto rows = all_rows(8);
    const auto parts = objective<double>(p, s.leaves, rows, 1.0, 1.0, cfg);
    CHECK(parts.bits == 0.46875);
    CHECK(parts.sparsity > 0.0);
    CHECK(parts.sparsity < 2.0);
    CHECK(parts.performance >= 0.0);
    CHECK(parts.total == doctest::Approx(parts.sparsity + parts.bits + cfg.lambda * parts.performance).epsilon(1e-15));
    const std::vector<double> short_leaves(5, 0.0);
    CHECK_THROWS_AS(objective<double>(p, short_leaves, rows, 1.0, 1.0, cfg), StructuralError);
}

TEST_CASE("objective gradient matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto f = small_fixture(seed);
        const auto p = problem(f);
        for (Ppl ppl : {Ppl::Kl, Ppl::Mse, Ppl::Cka}) {
            TrainConfig cfg;
            cfg.ppl = ppl;
            auto state = TrainState::initial(p.tau.delta.size());
            const auto noise = normal_vector(state.leaves.size(), seed + 50, 0.5);
            for (std::size_t i = 0; i < noise.size(); ++i) {
                state.leaves[i] += noise[i];
            }
            const auto rows = all_rows(12);
            const double rho = 0.6, omega = 0.4;
            const auto g = objective_gradient(p, state.leaves, rows, rho, omega, cfg);
            CHECK(g.parts.total == doctest::Approx(objective<double>(p, state.leaves, rows, rho, omega, cfg).total));
            auto fn = [&](std::span<const double> x) { return objective<double>(p, x, rows, rho, omega, cfg).total; };
            const auto rep = ad::fd_check(fn, state.leaves, g.grad, 1e-5, 1e-6);
            std::size_t ok = 0;
            for (double e : rep.rel_errors) {
                ok += e <= 1e-4;
            }
            CHECK(static_cast<double>(ok) >= 0.95 * static_cast<double>(rep.rel_errors.size()));
        }
    }
}

TEST_CASE("training is deterministic and produces valid compressed vectors") {
    const auto f = small_fixture(2);
    const auto p = problem(f);
    TrainConfig cfg;
    cfg.steps = 40;
    cfg.batch = 8;
    cfg.seed = 3;
    const auto a = train(p, cfg);
    const auto b = train(p, cfg);
    CHECK(a.state.leaves == b.state.leaves);
    CHECK(a.compressed.modules == b.compressed.modules);
    CHECK(a.log.size() == 40);
    CHECK(a.log[15].rho == doctest::Approx(0.9));

    const auto& c = a.compressed;
    CHECK(c.names == f.spec.module_names());
    CHECK(c.size() == f.base.total_size());
    CHECK(c.sparsity() >= 0.0);
    CHECK(c.sparsity() <= 1.0);
    for (const auto& m : c.modules) {
        m.validate();
        CHECK(is_supported_bitwidth(m.bits));
        // survivors re-quantize to themselves
        for (std::size_t i = 0; i < m.nnz(); ++i) {
            const double centre = m.spec().center(m.bins[i]);
            CHECK(quantize_index(centre, m.spec()) == m.bins[i]);
        }
    }
    for (const auto& row : a.log) {
        CHECK(row.sparsity >= 0.0);
        CHECK(row.sparsity <= 2.0);
        CHECK(row.bits >= 0.125);
        CHECK(row.bits <= 1.0);
        CHECK(row.performance >= 0.0);
    }
    std::stringstream ss;
    write_log_csv(ss, a.log);
    std::string header;
    std::getline(ss, header);
    CHECK(header == "step,rho,omega,total,sparsity_term,bit_term,performance,hard_sparsity");

    TrainConfig other = cfg;
    other.seed = 4;
    CHECK_FALSE(train(p, other).state.leaves == a.state.leaves);
}

TEST_CASE("finalize applies the hardened mask, chosen width and scale") {
    const auto f = small_fixture(5);
    const auto p = problem(f);
    auto s = TrainState::initial(p.tau.delta.size());
    s.leaves[3 + 3] = 2.0;  // module 0 prefers 8 bits
    s.leaves[2] = 0.7;
    const auto c = finalize(p, s, 0.2);
    CHECK(c.modules[0].bits == 8);
    CHECK(c.modules[1].bits == 1);
    CHECK(c.modules[0].scale == static_cast<float>(std::log1p(std::exp(0.7))));
    const auto& tau = p.tau.delta.at(0).values;
    const auto gate = soft_gate<double>(tau, p.bounds[0], 0.0, 0.0, 0.7, 0.2);
    const auto hard = harden(gate.mask);
    std::size_t kept = 0;
    for (auto h : hard) {
        kept += h;
    }
    CHECK(c.modules[0].nnz() == kept);
    const auto delta = c.delta();
    CHECK(delta.size() == 4);
}

TEST_CASE("a non-finite objective aborts with a snapshot") {
    const auto f = small_fixture(6);
    auto p = problem(f);
    for (std::size_t i = 0; i < p.reference.rows; ++i) {
        p.reference(i, 0) = std::numeric_limits<double>::quiet_NaN();
    }
    TrainConfig cfg;
    cfg.steps = 5;
    cfg.batch = 40;
    try {
        train(p, cfg);
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        CHECK(e.snapshot().step == 0);
    }
}

TEST_CASE("config validation and exemplar picking") {
    TrainConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    const auto rows = pick_exemplars(50, 20, 9);
    CHECK(rows.size() == 20);
    auto sorted = rows;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK(sorted.back() < 50);
    CHECK(pick_exemplars(50, 20, 9) == rows);
    CHECK_THROWS_AS(pick_exemplars(5, 6, 1), DomainError);
}

TEST_CASE("performance weight steers sparsity on a small harness") {
    HarnessConfig hc;
    hc.tasks = 1;
    hc.train_size = 400;
    hc.test_size = 200;
    const auto wb = prepare(hc);
    CHECK(accuracy(wb.spec, wb.fine_tuned[0], wb.tasks[0].test) >= accuracy(wb.spec, wb.base, wb.tasks[0].test));
    const auto p = TrainProblem::build(wb.spec, wb.base, wb.fine_tuned[0], wb.exemplars[0], "task0");
    auto run = [&](double lambda) {
        TrainConfig cfg = hc.train;
        cfg.lambda = lambda;
        cfg.steps = 200;
        return train(p, cfg).compressed.sparsity();
    };
    const double s0 = run(0.0);
    const double s3 = run(0.3);
    const double s9 = run(9.0);
    CHECK(s0 >= s3);
    CHECK(s3 >= s9);
    CHECK(s0 > 0.9);
}

TEST_CASE("stored bundles decode to the in-memory compressed vector") {
    const auto f = small_fixture(7);
    const auto p = problem(f);
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.batch = 8;
    const auto c = train(p, cfg).compressed;
    const auto st = c.store();
    const auto loaded = parse_bundle(serialize_bundle(std::span<const StoredTask>(&st, 1)));
    const auto delta = loaded.at(0).to_params(c.names);
    CHECK(delta == c.delta());
    CHECK(evaluate(f.spec, f.base, delta, f.exemplars) == evaluate(f.spec, f.base, c.delta(), f.exemplars));
}
