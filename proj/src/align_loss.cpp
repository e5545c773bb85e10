#include "tsw/align_loss.hpp"

namespace tsw {

Ppl parse_ppl(const std::string& name) {
    if (name == "kl") {
        return Ppl::Kl;
    }
    if (name == "mse") {
        return Ppl::Mse;
    }
    if (name == "cka") {
        return Ppl::Cka;
    }
    throw DomainError("unknown performance-preservation loss '" + name + "' (expected kl, mse or cka)");
}

std::string to_string(Ppl ppl) {
    switch (ppl) {
        case Ppl::Kl: return "kl";
        case Ppl::Mse: return "mse";
        case Ppl::Cka: return "cka";
    }
    return "?";
}

std::vector<double> lambda_presets(Ppl ppl) {
    switch (ppl) {
        case Ppl::Kl: return {0.1, 0.3, 0.5, 0.7, 0.9};
        case Ppl::Mse: return {0.01, 0.05, 0.09, 0.13, 0.17};
        case Ppl::Cka: return {1.0, 3.0, 5.0, 7.0, 9.0};
    }
    return {};
}

}  // namespace tsw
