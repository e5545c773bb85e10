#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tsw/error.hpp"
#include "tsw/mlp.hpp"

using namespace tsw;
using tsw::test::normal_vector;

namespace {

// Plain nested-loop forward pass.
std::vector<double> oracle_logits(const MlpSpec& spec, const ParamSet& p, std::span<const double> x) {
    std::vector<double> h(x.begin(), x.end());
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const auto& w = p.at(2 * l).values;
        const auto& b = p.at(2 * l + 1).values;
        std::vector<double> next(spec.widths[l + 1]);
        for (std::size_t o = 0; o < next.size(); ++o) {
            double z = b[o];
            for (std::size_t i = 0; i < h.size(); ++i) {
                z += w[o * h.size() + i] * h[i];
            }
            const bool hidden = l + 1 < spec.layer_count();
            next[o] = hidden ? (spec.activation == Activation::Tanh ? std::tanh(z) : std::max(z, 0.0)) : z;
        }
        h = std::move(next);
    }
    return h;
}

}  // namespace

TEST_CASE("layout and naming") {
    MlpSpec spec;
    CHECK(spec.module_names() ==
          std::vector<std::string>{"fc0.weight", "fc0.bias", "fc1.weight", "fc1.bias"});
    CHECK(spec.module_sizes() == std::vector<std::size_t>{512, 32, 128, 4});
    CHECK(spec.feature_dim() == 32);
    spec.check(spec.zeros());
    MlpSpec bad;
    bad.widths = {4, 3};
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad.widths = {4, 0, 3};
    CHECK_THROWS_AS(bad.validate(), DomainError);
    ParamSet wrong;
    wrong.add("fc0.weight", {1.0});
    CHECK_THROWS_AS(spec.check(wrong), StructuralError);
    CHECK(parse_activation("relu") == Activation::Relu);
    CHECK_THROWS_AS(parse_activation("gelu"), DomainError);
}

TEST_CASE("zero network gives zero logits") {
    MlpSpec spec;
    const auto x = normal_vector(16, 1);
    const auto r = forward(spec, spec.zeros(), x);
    for (double v : r.logits) {
        CHECK(v == 0.0);
    }
    CHECK(r.features.size() == spec.feature_dim());
}

TEST_CASE("one-unit identity network applies the activation") {
    MlpSpec spec;
    spec.widths = {1, 1, 1};
    ParamSet p;
    p.add("fc0.weight", {1.0});
    p.add("fc0.bias", {0.0});
    p.add("fc1.weight", {1.0});
    p.add("fc1.bias", {0.0});
    for (double x : {-2.0, 0.3, 1.5}) {
        const std::vector<double> in{x};
        CHECK(forward(spec, p, in).logits[0] == doctest::Approx(std::tanh(x)).epsilon(1e-15));
        CHECK(features(spec, p, in)[0] == doctest::Approx(std::tanh(x)).epsilon(1e-15));
    }
}

TEST_CASE("forward matches a loop oracle for both activations and deeper nets") {
    for (auto act : {Activation::Tanh, Activation::Relu}) {
        MlpSpec spec;
        spec.widths = {5, 7, 6, 3};
        spec.activation = act;
        const auto p = spec.init(11);
        spec.check(p);
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto x = normal_vector(5, 40 + s);
            const auto got = forward(spec, p, x).logits;
            const auto want = oracle_logits(spec, p, x);
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(std::abs(got[c] - want[c]) <= 1e-12 * std::max(1.0, std::abs(want[c])));
            }
        }
    }
    MlpSpec spec;
    CHECK_THROWS_AS(forward(spec, spec.zeros(), std::vector<double>(3, 0.0)), StructuralError);
}

TEST_CASE("init is seeded and biases start at zero") {
    MlpSpec spec;
    CHECK(spec.init(3) == spec.init(3));
    CHECK_FALSE(spec.init(3) == spec.init(4));
    const auto p = spec.init(3);
    for (double b : p.at(1).values) {
        CHECK(b == 0.0);
    }
}

TEST_CASE("datasets, predictions and cross-entropy") {
    MlpSpec spec;
    spec.widths = {2, 3, 2};
    ParamSet p;
    p.add("fc0.weight", {1, 0, 0, 1, 0, 0});
    p.add("fc0.bias", {0, 0, 0});
    p.add("fc1.weight", {1, 0, 0, 0, 1, 0});
    p.add("fc1.bias", {0, 0});
    Dataset d;
    d.dim = 2;
    d.add(std::vector<double>{2.0, -1.0}, 0);
    d.add(std::vector<double>{-1.0, 2.0}, 1);
    d.add(std::vector<double>{-1.0, 3.0}, 0);
    CHECK(predict(spec, p, d.input(0)) == 0);
    CHECK(accuracy(spec, p, d) == doctest::Approx(2.0 / 3.0));
    const std::vector<std::size_t> rows{1, 2};
    const auto sub = d.subset(rows);
    CHECK(sub.size() == 2);
    CHECK(sub.labels == std::vector<int>{1, 0});
    CHECK_THROWS(d.add(std::vector<double>{1.0}, 0));

    Matrix<double> logits(1, 2);
    logits(0, 0) = 1.0;
    logits(0, 1) = 0.0;
    const std::vector<int> lab{1};
    CHECK(cross_entropy(logits, lab) == doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-14));
}
