#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tsw/autodiff.hpp"
#include "tsw/error.hpp"

using namespace tsw;
using tsw::test::normal_vector;

TEST_CASE("gradient of half the squared norm is the input") {
    const auto x0 = normal_vector(20, 1);
    ad::Tape tape;
    const auto x = tape.leaves(x0);
    std::vector<ad::Var> sq;
    for (const auto& v : x) {
        sq.push_back(ad::square(v));
    }
    const auto y = ad::sum(std::span<const ad::Var>(sq)) * ad::Var(0.5);
    const auto g = tape.backward(y).of(x);
    for (std::size_t i = 0; i < x0.size(); ++i) {
        CHECK(g[i] == doctest::Approx(x0[i]).epsilon(1e-15));
    }
}

TEST_CASE("softplus slope at zero") {
    ad::Tape tape;
    const auto k = tape.leaf(0.0);
    const auto y = ad::softplus(k);
    CHECK(y.value() == doctest::Approx(std::log(2.0)));
    CHECK(tape.backward(y)[k] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("every primitive matches central differences") {
    using F = ad::Var (*)(const ad::Var&);
    using D = double (*)(double);
    const std::vector<std::pair<F, D>> fns{
        {ad::exp, ad::exp},         {ad::tanh, ad::tanh},         {ad::atan, ad::atan},
        {ad::sigmoid, ad::sigmoid}, {ad::softplus, ad::softplus}, {ad::square, ad::square},
    };
    for (const auto& [fv, fd] : fns) {
        for (double x0 : {-2.3, -0.4, 0.7, 3.1}) {
            ad::Tape tape;
            const auto x = tape.leaf(x0);
            const double g = tape.backward(fv(x))[x];
            const double n = (fd(x0 + 1e-6) - fd(x0 - 1e-6)) / 2e-6;
            CHECK(ad::relative_error(g, n) < 1e-7);
        }
    }
    for (double x0 : {0.3, 1.7, 9.0}) {
        ad::Tape tape;
        const auto x = tape.leaf(x0);
        CHECK(tape.backward(ad::log(x))[x] == doctest::Approx(1.0 / x0));
        CHECK(tape.backward(ad::sqrt(x))[x] == doctest::Approx(0.5 / std::sqrt(x0)));
    }
    ad::Tape tape;
    const auto r = tape.leaf(-1.0);
    CHECK(tape.backward(ad::relu(r))[r] == 0.0);
}

TEST_CASE("composite expression with shared subterms") {
    const std::vector<double> x0{0.3, -1.2, 2.0};
    auto f = [](const auto& x) {
        using S = std::decay_t<decltype(x[0])>;
        const S a = x[0] * x[1] + ad::exp(x[2] / S(3.0));
        const S b = a * a - ad::log_sum_exp(std::span<const S>(x.data(), x.size()));
        return b / (S(1.0) + ad::square(x[0])) + ad::dot(std::span<const S>(x.data(), 2), std::span<const S>(x.data() + 1, 2));
    };
    ad::Tape tape;
    const auto x = tape.leaves(x0);
    const auto g = tape.backward(f(x)).of(x);
    auto fd = [&](std::span<const double> p) { return f(std::vector<double>(p.begin(), p.end())); };
    const auto rep = ad::fd_check(fd, x0, g);
    CHECK(rep.max_rel_error < 1e-8);
}

TEST_CASE("fd_check on a quadratic") {
    const std::vector<double> x0{1.0, -2.0, 0.5};
    auto f = [](std::span<const double> x) { return 3 * x[0] * x[0] + x[0] * x[1] - 2 * x[2] * x[2]; };
    const std::vector<double> g{6 * 1.0 - 2.0, 1.0, -2.0};
    const auto rep = ad::fd_check(f, x0, g);
    CHECK(rep.max_rel_error < 1e-8);
    CHECK(rep.rel_errors.size() == 3);
}

TEST_CASE("constants stay off the tape and foreign variables are rejected") {
    ad::Tape tape;
    const auto c = ad::Var(2.0) * ad::Var(3.0);
    CHECK(c.is_constant());
    CHECK(tape.node_count() == 0);
    const auto x = tape.leaf(1.0);
    const auto y = x * c;
    const auto grad = tape.backward(y);
    CHECK(grad[x] == 6.0);
    CHECK_THROWS_AS(grad[c], StructuralError);

    ad::Tape other;
    const auto z = other.leaf(1.0);
    CHECK_THROWS_AS(grad[z], StructuralError);
    CHECK_THROWS_AS(x + z, StructuralError);
}

TEST_CASE("gradients are deterministic") {
    const auto x0 = normal_vector(30, 2);
    auto run = [&] {
        ad::Tape tape;
        const auto x = tape.leaves(x0);
        std::vector<ad::Var> t;
        for (const auto& v : x) {
            t.push_back(ad::tanh(v) * ad::sigmoid(v));
        }
        return tape.backward(ad::log_sum_exp(std::span<const ad::Var>(t))).of(x);
    };
    CHECK(run() == run());
}
