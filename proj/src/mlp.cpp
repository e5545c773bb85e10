#include "tsw/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tsw/error.hpp"
#include "tsw/rng.hpp"

namespace tsw {

Activation parse_activation(const std::string& name) {
    if (name == "tanh") {
        return Activation::Tanh;
    }
    if (name == "relu") {
        return Activation::Relu;
    }
    throw DomainError("unknown activation '" + name + "'");
}

std::vector<std::string> MlpSpec::module_names() const {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < layer_count(); ++l) {
        names.push_back("fc" + std::to_string(l) + ".weight");
        names.push_back("fc" + std::to_string(l) + ".bias");
    }
    return names;
}

std::vector<std::size_t> MlpSpec::module_sizes() const {
    std::vector<std::size_t> sizes;
    for (std::size_t l = 0; l < layer_count(); ++l) {
        sizes.push_back(widths[l] * widths[l + 1]);
        sizes.push_back(widths[l + 1]);
    }
    return sizes;
}

void MlpSpec::validate() const {
    if (widths.size() < 3) {
        throw DomainError("model needs at least one hidden layer");
    }
    if (std::ranges::any_of(widths, [](std::size_t w) { return w == 0; })) {
        throw DomainError("layer widths must be positive");
    }
}

void MlpSpec::check(const ParamSet& params) const {
    const auto names = module_names();
    const auto sizes = module_sizes();
    if (params.size() != names.size()) {
        throw StructuralError("model expects " + std::to_string(names.size()) + " modules, got " +
                              std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto& m = params.at(i);
        if (m.name != names[i] || m.values.size() != sizes[i]) {
            throw StructuralError("module '" + m.name + "' does not match layout entry '" + names[i] + "' (" +
                                  std::to_string(sizes[i]) + " values)");
        }
    }
}

ParamSet MlpSpec::zeros() const {
    validate();
    ParamSet p;
    const auto names = module_names();
    const auto sizes = module_sizes();
    for (std::size_t i = 0; i < names.size(); ++i) {
        p.add(names[i], std::vector<double>(sizes[i], 0.0));
    }
    return p;
}

ParamSet MlpSpec::init(std::uint64_t seed) const {
    ParamSet p = zeros();
    Rng rng(seed);
    for (std::size_t l = 0; l < layer_count(); ++l) {
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(widths[l])));
        for (double& w : p.at(2 * l).values) {
            w = normal(rng);
        }
    }
    return p;
}

std::vector<std::span<const double>> module_spans(const ParamSet& params) {
    std::vector<std::span<const double>> out;
    out.reserve(params.size());
    for (const auto& m : params.modules()) {
        out.emplace_back(m.values);
    }
    return out;
}

ForwardResult<double> forward(const MlpSpec& spec, const ParamSet& params, std::span<const double> x) {
    spec.check(params);
    const auto spans = module_spans(params);
    return forward<double>(spec, spans, x);
}

void Dataset::add(std::span<const double> x, int label) {
    if (labels.empty() && dim == 0) {
        dim = x.size();
    }
    if (x.size() != dim) {
        throw StructuralError("row has " + std::to_string(x.size()) + " features, dataset has " +
                              std::to_string(dim));
    }
    inputs.insert(inputs.end(), x.begin(), x.end());
    labels.push_back(label);
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.dim = dim;
    for (std::size_t r : rows) {
        out.add(input(r), labels.at(r));
    }
    return out;
}

std::vector<double> features(const MlpSpec& spec, const ParamSet& params, std::span<const double> x) {
    return forward(spec, params, x).features;
}

int predict(const MlpSpec& spec, const ParamSet& params, std::span<const double> x) {
    const auto r = forward(spec, params, x);
    return static_cast<int>(std::ranges::max_element(r.logits) - r.logits.begin());
}

double accuracy(const MlpSpec& spec, const ParamSet& params, const Dataset& data) {
    if (data.size() == 0) {
        return 0.0;
    }
    spec.check(params);
    const auto spans = module_spans(params);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = forward<double>(spec, spans, data.input(i));
        const int y = static_cast<int>(std::ranges::max_element(r.logits) - r.logits.begin());
        hit += y == data.labels[i];
    }
    return static_cast<double>(hit) / static_cast<double>(data.size());
}

}  // namespace tsw
