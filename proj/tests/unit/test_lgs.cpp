#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "tsw/autodiff.hpp"
#include "tsw/error.hpp"
#include "tsw/lgs.hpp"

using namespace tsw;
using tsw::test::normal_vector;

namespace {

SignedBounds bounds(double lo_p, double hi_p, double lo_n, double hi_n) {
    SignedBounds b;
    b.v_min_pos = lo_p;
    b.v_max_pos = hi_p;
    b.v_min_neg = lo_n;
    b.v_max_neg = hi_n;
    b.has_pos = b.has_neg = true;
    return b;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("map_threshold examples") {
    const auto b = bounds(0.1, 0.9, 0.0, 1.0);
    CHECK(map_threshold(0.0, b, Sign::Positive).t == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(map_threshold(0.0, b, Sign::Positive).r_max == doctest::Approx(0.8));
    CHECK(map_threshold(1.0, b, Sign::Negative).t == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(map_threshold(1e12, b, Sign::Positive).t == doctest::Approx(0.9).epsilon(1e-10));
    CHECK(map_threshold(-1e12, b, Sign::Positive).t == doctest::Approx(0.1).epsilon(1e-10));
    SignedBounds one = b;
    one.has_neg = false;
    CHECK(map_threshold(0.0, one, Sign::Negative).degenerate);
}

TEST_CASE("thresholds stay strictly inside the bounds") {
    const auto b = bounds(0.25, 4.0, 0.5, 3.0);
    Rng rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 2000; ++i) {
        const double s = i % 2 ? u(rng) : u(rng) * 1e-6;
        const auto tp = map_threshold(s, b, Sign::Positive);
        const auto tn = map_threshold(s, b, Sign::Negative);
        CHECK(tp.t > 0.25);
        CHECK(tp.t < 4.0);
        CHECK(tn.t > 0.5);
        CHECK(tn.t < 3.0);
    }
}

TEST_CASE("soft_gate matches the scalar formula") {
    const std::vector<double> tau{0.5, -0.2, 0.1, -0.9, 0.3, 0.0};
    const auto b = signed_bounds(tau);
    GateParams g{0.4, -0.7, 0.2};
    for (double rho : {1.0, 0.3, 0.05}) {
        const auto out = soft_gate(tau, g, rho);
        const double tp = b.v_min_pos + (std::atan(g.s_pos) / std::numbers::pi + 0.5) * (b.v_max_pos - b.v_min_pos);
        const double tn = b.v_min_neg + (std::atan(g.s_neg) / std::numbers::pi + 0.5) * (b.v_max_neg - b.v_min_neg);
        const double rp = b.v_max_pos - b.v_min_pos;
        const double rn = b.v_max_neg - b.v_min_neg;
        const double sp = std::log1p(std::exp(g.kappa));
        for (std::size_t j = 0; j < tau.size(); ++j) {
            const double m = sig((tau[j] - tp) / (rho * rp + 1e-12)) + sig((-tn - tau[j]) / (rho * rn + 1e-12));
            CHECK(out.mask[j] == doctest::Approx(m).epsilon(1e-13));
            CHECK(out.scaled[j] == doctest::Approx(sp * m).epsilon(1e-13));
            CHECK(out.mask[j] > 0.0);
            CHECK(out.mask[j] < 2.0);
        }
    }
}

TEST_CASE("soft_gate at the positive threshold") {
    const std::vector<double> probe{0.2, -0.4, 0.6, -0.8};
    const auto b = signed_bounds(probe);
    GateParams g;
    const double tp = map_threshold(0.0, b, Sign::Positive).t;
    const double tn = map_threshold(0.0, b, Sign::Negative).t;
    const double rn = b.v_max_neg - b.v_min_neg;
    const std::vector<double> at{tp};
    const auto out = soft_gate<double>(at, b, 0.0, 0.0, g.kappa, 1.0);
    CHECK(out.mask[0] == doctest::Approx(0.5 + sig((-tn - tp) / (rn + 1e-12))).epsilon(1e-14));
}

TEST_CASE("soft_gate unity scale, saturation and one-sided modules") {
    const std::vector<double> tau{0.1, 0.5, 0.9, -0.3};
    GateParams g;
    const auto out = soft_gate(tau, g, 1e-6);
    for (std::size_t j = 0; j < tau.size(); ++j) {
        CHECK(out.scaled[j] == doctest::Approx(out.mask[j]).epsilon(1e-15));
    }
    CHECK(std::abs(out.mask[2] - 1.0) < 1e-3);

    const std::vector<double> pos_only{0.1, 0.2, 0.4};
    const auto one = soft_gate(pos_only, g, 1.0);
    for (double m : one.mask) {
        CHECK(m > 0.0);
        CHECK(m < 1.0);
    }
    // constant magnitudes: r_max = 0 must not produce NaN
    const std::vector<double> flat{0.3, 0.3, -0.3};
    for (double m : soft_gate(flat, g, 0.5).mask) {
        CHECK(std::isfinite(m));
    }
    CHECK_THROWS_AS(soft_gate(tau, g, 0.0), DomainError);
}

TEST_CASE("low-temperature mask agrees with the hard cut away from thresholds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto tau = normal_vector(400, 50 + seed);
        const auto b = signed_bounds(tau);
        GateParams g{0.3 * static_cast<double>(seed % 5) - 0.6, 0.5 - 0.2 * static_cast<double>(seed % 4), 0.0};
        const double tp = map_threshold(g.s_pos, b, Sign::Positive).t;
        const double tn = map_threshold(g.s_neg, b, Sign::Negative).t;
        const double rp = b.v_max_pos - b.v_min_pos;
        const double rn = b.v_max_neg - b.v_min_neg;
        const auto out = soft_gate(tau, g, 1e-6);
        for (std::size_t j = 0; j < tau.size(); ++j) {
            const double x = tau[j];
            if (x > tp + 0.01 * rp || x < -tn - 0.01 * rn) {
                CHECK(std::abs(out.mask[j] - 1.0) < 1e-3);
            } else if (x < tp - 0.01 * rp && x > -tn + 0.01 * rn) {
                CHECK(std::abs(out.mask[j]) < 1e-3);
            }
        }
    }
}

TEST_CASE("mask gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto tau = normal_vector(25, 80 + seed);
        const auto b = signed_bounds(tau);
        for (double rho : {1.0, 0.1}) {
            const std::vector<double> x0{0.3 - 0.1 * static_cast<double>(seed), 0.2, 0.1 * static_cast<double>(seed)};
            for (std::size_t j = 0; j < tau.size(); ++j) {
                ad::Tape tape;
                const auto leaves = tape.leaves(x0);
                const std::vector<double> one{tau[j]};
                const auto out = soft_gate<ad::Var>(one, b, leaves[0], leaves[1], leaves[2], rho);
                const auto grad = tape.backward(out.scaled[0]).of(leaves);
                auto f = [&](std::span<const double> x) {
                    return soft_gate<double>(one, b, x[0], x[1], x[2], rho).scaled[0];
                };
                const auto rep = ad::fd_check(f, x0, grad, 1e-5, 1e-6);
                CHECK(rep.max_rel_error < 1e-4);
            }
        }
    }
}

TEST_CASE("sparsity_loss") {
    std::vector<std::vector<double>> two{{0.5, 0.5}, {1.0, 1.0}};
    CHECK(sparsity_loss<double>(two) == doctest::Approx(0.75));
    std::vector<std::vector<double>> ones{{1.0, 1.0, 1.0}};
    CHECK(sparsity_loss<double>(ones) == 1.0);
    std::vector<std::vector<double>> tiny{{1e-20, 1e-20}};
    CHECK(sparsity_loss<double>(tiny) < 1e-19);

    // independent of kappa: it reads M, not the scaled mask
    const auto tau = normal_vector(64, 4);
    GateParams a{0.1, 0.2, -3.0};
    GateParams c{0.1, 0.2, 5.0};
    std::vector<std::vector<double>> ma{soft_gate(tau, a, 0.5).mask};
    std::vector<std::vector<double>> mc{soft_gate(tau, c, 0.5).mask};
    CHECK(sparsity_loss<double>(ma) == sparsity_loss<double>(mc));
}

TEST_CASE("harden is a strict cut at 0.5") {
    CHECK(harden(std::vector<double>{0.49, 0.5, 0.51}) == std::vector<std::uint8_t>{0, 0, 1});
    CHECK(harden(std::vector<double>(4, 0.5)) == std::vector<std::uint8_t>(4, 0));
    const auto m = normal_vector(100, 8, 0.5);
    const auto h = harden(m);
    for (std::size_t j = 0; j < m.size(); ++j) {
        CHECK(h[j] == (m[j] > 0.5 ? 1 : 0));
    }
}

TEST_CASE("temperature schedule") {
    CHECK(temperature_schedule(0) == 1.0);
    CHECK(temperature_schedule(9) == 1.0);
    CHECK(temperature_schedule(10) == doctest::Approx(0.9));
    CHECK(temperature_schedule(500) == doctest::Approx(std::pow(0.9, 50)).epsilon(1e-12));
    CHECK(temperature_schedule(500) == doctest::Approx(5.154e-3).epsilon(1e-3));
    CHECK_THROWS_AS(temperature_schedule(-1), DomainError);
}
