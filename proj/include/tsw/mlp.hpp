#pragma once

// Small fully connected classifier standing in for f(x; theta). Layer l owns two modules,
// "fc<l>.weight" (out x in, row-major) and "fc<l>.bias". Hidden layers apply the activation;
// the last layer is the linear classifier and its input is the feature vector.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsw/align_loss.hpp"
#include "tsw/autodiff.hpp"
#include "tsw/vector_core.hpp"

namespace tsw {

enum class Activation { Tanh, Relu };

Activation parse_activation(const std::string& name);

struct MlpSpec {
    std::vector<std::size_t> widths{16, 32, 4};
    Activation activation = Activation::Tanh;

    std::size_t input_dim() const { return widths.front(); }
    std::size_t classes() const { return widths.back(); }
    std::size_t feature_dim() const { return widths[widths.size() - 2]; }
    std::size_t layer_count() const { return widths.size() - 1; }

    std::vector<std::string> module_names() const;
    std::vector<std::size_t> module_sizes() const;

    // Throws DomainError unless there is at least one hidden layer and all widths are >= 1.
    void validate() const;
    // Throws StructuralError when params do not match this layout.
    void check(const ParamSet& params) const;

    ParamSet zeros() const;
    ParamSet init(std::uint64_t seed) const;
};

template <class S>
struct ForwardResult {
    std::vector<S> logits;
    std::vector<S> features;
};

template <class S>
S activate(Activation a, const S& x) {
    return a == Activation::Tanh ? ad::tanh(x) : ad::relu(x);
}

/// modules[2l] is the weight of layer l, modules[2l + 1] its bias.
template <class S>
ForwardResult<S> forward(const MlpSpec& spec, std::span<const std::span<const S>> modules, std::span<const double> x) {
    if (x.size() != spec.input_dim()) {
        throw StructuralError("input has " + std::to_string(x.size()) + " features, model expects " +
                              std::to_string(spec.input_dim()));
    }
    ForwardResult<S> r;
    std::vector<S> h;
    const std::size_t layers = spec.layer_count();
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = spec.widths[l];
        const std::size_t out = spec.widths[l + 1];
        const auto w = modules[2 * l];
        const auto b = modules[2 * l + 1];
        std::vector<S> next;
        next.reserve(out);
        for (std::size_t o = 0; o < out; ++o) {
            const auto row = w.subspan(o * in, in);
            S z = l == 0 ? ad::dot(row, x) : ad::dot(row, std::span<const S>(h));
            z = z + b[o];
            next.push_back(l + 1 < layers ? activate(spec.activation, z) : z);
        }
        if (l + 1 == layers) {
            r.features = std::move(h);
            r.logits = std::move(next);
        } else {
            h = std::move(next);
        }
    }
    if (layers == 1) {
        r.features.assign(x.begin(), x.end());
    }
    return r;
}

std::vector<std::span<const double>> module_spans(const ParamSet& params);

ForwardResult<double> forward(const MlpSpec& spec, const ParamSet& params, std::span<const double> x);

// Row-major batch of inputs.
struct Dataset {
    std::size_t dim = 0;
    std::vector<double> inputs;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const double> input(std::size_t i) const { return {inputs.data() + i * dim, dim}; }
    void add(std::span<const double> x, int label);
    Dataset subset(std::span<const std::size_t> rows) const;
};

template <class S>
Matrix<S> forward_batch(const MlpSpec& spec, std::span<const std::span<const S>> modules, const Dataset& data,
                        std::span<const std::size_t> rows) {
    Matrix<S> out(rows.size(), spec.classes());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto r = forward<S>(spec, modules, data.input(rows[i]));
        for (std::size_t c = 0; c < spec.classes(); ++c) {
            out(i, c) = r.logits[c];
        }
    }
    return out;
}

std::vector<double> features(const MlpSpec& spec, const ParamSet& params, std::span<const double> x);
int predict(const MlpSpec& spec, const ParamSet& params, std::span<const double> x);
double accuracy(const MlpSpec& spec, const ParamSet& params, const Dataset& data);

// Mean softmax cross-entropy of logits against integer labels.
template <class S>
S cross_entropy(const Matrix<S>& logits, std::span<const int> labels) {
    std::vector<S> terms;
    terms.reserve(logits.rows);
    std::vector<S> row(logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        for (std::size_t c = 0; c < logits.cols; ++c) {
            row[c] = logits(i, c);
        }
        terms.push_back(ad::log_sum_exp(std::span<const S>(row)) - row[static_cast<std::size_t>(labels[i])]);
    }
    return ad::sum(std::span<const S>(terms)) / S(static_cast<double>(logits.rows));
}

}  // namespace tsw
