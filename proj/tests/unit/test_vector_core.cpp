#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "support.hpp"
#include "tsw/error.hpp"
#include "tsw/vector_core.hpp"

using namespace tsw;
using tsw::test::normal_vector;

namespace {

ParamSet single(std::vector<double> v, const std::string& name = "m") {
    ParamSet p;
    p.add(name, std::move(v));
    return p;
}

// Count of positives at or below gamma; the nearest-rank rule pins this to floor(alpha * m).
std::size_t pruned_pos(const std::vector<double>& v, double gamma) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](double x) { return x > 0 && x <= gamma; }));
}

}  // namespace

TEST_CASE("diff subtracts module by module") {
    const auto tv = diff(single({1.5, 0.0}), single({1.0, 0.5}), "t");
    CHECK(tv.task_id == "t");
    CHECK(tv.delta.at(0).values == std::vector<double>{0.5, -0.5});

    const auto same = diff(single({1.0, -2.0, 3.0}), single({1.0, -2.0, 3.0}));
    for (double x : same.delta.at(0).values) {
        CHECK(x == 0.0);
    }
}

TEST_CASE("diff matches a scalar loop on random vectors and reconstructs") {
    const auto a = normal_vector(1000, 1);
    const auto b = normal_vector(1000, 2);
    const auto tv = diff(single(a), single(b));
    const auto& d = tv.delta.at(0).values;
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(d[i] == a[i] - b[i]);
    }
    // exactly representable inputs rebuild bitwise
    const auto ft = single({0.25, -1.5, 3.0, 0.0});
    const auto base = single({1.0, 0.5, -0.125, 2.0});
    CHECK(apply_delta(base, diff(ft, base).delta) == ft);
}

TEST_CASE("diff rejects misaligned parameter sets and names the module") {
    ParamSet a, b;
    a.add("fc0.weight", {1, 2});
    a.add("fc0.bias", {1});
    b.add("fc0.weight", {1, 2});
    b.add("fc0.bias", {1, 2});
    try {
        diff(a, b);
        FAIL("expected StructuralError");
    } catch (const StructuralError& e) {
        CHECK(std::string(e.what()).find("fc0.bias") != std::string::npos);
    }
    ParamSet c;
    c.add("other", {1, 2});
    CHECK_THROWS_AS(diff(single({1, 2}), c), StructuralError);
}

TEST_CASE("ParamSet rejects duplicate names and empty modules") {
    ParamSet p;
    p.add("a", {1.0});
    CHECK_THROWS_AS(p.add("a", {2.0}), StructuralError);
    CHECK_THROWS_AS(p.add("b", {}), StructuralError);
    p.add("b", {1.0, 2.0});
    CHECK(p.total_size() == 3);
    CHECK(p.find("b") != nullptr);
    CHECK(p.find("zz") == nullptr);
}

TEST_CASE("signed_bounds splits by sign") {
    const std::vector<double> v{0.5, -0.2, 0.1, -0.9};
    const auto b = signed_bounds(v);
    CHECK(b.has_pos);
    CHECK(b.has_neg);
    CHECK(b.v_min_pos == 0.1);
    CHECK(b.v_max_pos == 0.5);
    CHECK(b.v_min_neg == 0.2);
    CHECK(b.v_max_neg == 0.9);

    const std::vector<double> pos{1.0, 2.0};
    CHECK_FALSE(signed_bounds(pos).has_neg);
    const std::vector<double> zeros(5, 0.0);
    const auto z = signed_bounds(zeros);
    CHECK_FALSE(z.has_pos);
    CHECK_FALSE(z.has_neg);
}

TEST_CASE("signed_bounds agrees with a sort oracle") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto v = normal_vector(1 + seed * 3, 100 + seed);
        if (seed % 4 == 0) {
            v[0] = 0.0;
        }
        std::vector<double> p, n;
        for (double x : v) {
            if (x > 0) {
                p.push_back(x);
            } else if (x < 0) {
                n.push_back(-x);
            }
        }
        std::sort(p.begin(), p.end());
        std::sort(n.begin(), n.end());
        const auto b = signed_bounds(v);
        REQUIRE(b.has_pos == !p.empty());
        REQUIRE(b.has_neg == !n.empty());
        if (!p.empty()) {
            CHECK(b.v_min_pos == p.front());
            CHECK(b.v_max_pos == p.back());
        }
        if (!n.empty()) {
            CHECK(b.v_min_neg == n.front());
            CHECK(b.v_max_neg == n.back());
        }
    }
}

TEST_CASE("sign_quantile examples") {
    const std::vector<double> v{0.5, -0.2, 0.1, -0.9};
    CHECK(sign_quantile(v, 0.5, Sign::Positive).value() == 0.1);
    CHECK(sign_quantile(v, 0.5, Sign::Negative).value() == -0.2);
    const double g0 = sign_quantile(v, 0.0, Sign::Positive).value();
    CHECK(g0 < 0.1);
    const std::vector<double> pos{1.0, 2.0};
    CHECK_FALSE(sign_quantile(pos, 0.5, Sign::Negative).has_value());
    CHECK_THROWS_AS(sign_quantile(v, -0.1, Sign::Positive), DomainError);
    CHECK_THROWS_AS(sign_quantile(v, 1.5, Sign::Positive), DomainError);
    CHECK_THROWS_AS(sign_quantile(v, std::numeric_limits<double>::quiet_NaN(), Sign::Positive), DomainError);
}

TEST_CASE("sign_quantile prunes floor(alpha * m) elements of each sign") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto v = normal_vector(7 + seed * 5, 300 + seed);
        const std::size_t m_pos = static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return x > 0; }));
        const std::size_t m_neg = static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return x < 0; }));
        for (double alpha : {0.0, 0.1, 0.33, 0.5, 0.9, 1.0}) {
            const auto gp = sign_quantile(v, alpha, Sign::Positive);
            const auto gn = sign_quantile(v, alpha, Sign::Negative);
            if (m_pos > 0) {
                CHECK(pruned_pos(v, *gp) == static_cast<std::size_t>(std::floor(alpha * static_cast<double>(m_pos))));
            }
            if (m_neg > 0) {
                const auto pruned = static_cast<std::size_t>(
                    std::count_if(v.begin(), v.end(), [&](double x) { return x < 0 && x >= *gn; }));
                CHECK(pruned == static_cast<std::size_t>(std::floor(alpha * static_cast<double>(m_neg))));
            }
        }
        // alpha = 1 prunes the whole class, alpha = 0 keeps it
        if (m_pos > 0) {
            CHECK(pruned_pos(v, *sign_quantile(v, 1.0, Sign::Positive)) == m_pos);
            CHECK(pruned_pos(v, *sign_quantile(v, 0.0, Sign::Positive)) == 0);
        }
    }
}

TEST_CASE("l2_norm") {
    const std::vector<double> v{3.0, 4.0};
    CHECK(l2_norm(v) == 5.0);
    CHECK(l2_norm(std::span<const double>{}) == 0.0);
    const auto r = normal_vector(100, 9);
    double acc = 0.0;
    for (double x : r) {
        acc += x * x;
    }
    CHECK(tsw::test::rel_diff(l2_norm(r), std::sqrt(acc)) < 1e-12);
}

TEST_CASE("text dump round-trips") {
    ParamSet p;
    p.add("fc0.weight", {0.1, -2.5, 1e-17});
    p.add("fc0.bias", {3.0});
    std::stringstream ss;
    write_text(ss, p);
    CHECK(read_text(ss) == p);
}
