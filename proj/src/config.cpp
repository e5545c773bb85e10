#include <charconv>
#include <fstream>
#include <functional>
#include <map>

#include "tsw/error.hpp"
#include "tsw/harness.hpp"

namespace tsw {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw DomainError("bad value '" + text + "' for " + key);
    }
    return v;
}

using Setter = std::function<void(HarnessConfig&, const std::string&, const std::string&)>;

template <class T, class Field>
Setter number(Field field) {
    return [field](HarnessConfig& c, const std::string& k, const std::string& v) {
        std::invoke(field, c) = parse_number<T>(k, v);
    };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"seed", number<std::uint64_t>([](HarnessConfig& c) -> auto& { return c.seed; })},
        {"tasks", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.tasks; })},
        {"dim", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.dim; })},
        {"classes", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.classes; })},
        {"hidden", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.hidden; })},
        {"train_size", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.train_size; })},
        {"test_size", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.test_size; })},
        {"class_sep", number<double>([](HarnessConfig& c) -> auto& { return c.class_sep; })},
        {"task_sep", number<double>([](HarnessConfig& c) -> auto& { return c.task_sep; })},
        {"noise", number<double>([](HarnessConfig& c) -> auto& { return c.noise; })},
        {"pretrain_steps", number<int>([](HarnessConfig& c) -> auto& { return c.pretrain_steps; })},
        {"pretrain_lr", number<double>([](HarnessConfig& c) -> auto& { return c.pretrain_lr; })},
        {"finetune_steps", number<int>([](HarnessConfig& c) -> auto& { return c.finetune_steps; })},
        {"finetune_lr", number<double>([](HarnessConfig& c) -> auto& { return c.finetune_lr; })},
        {"finetune_batch", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.finetune_batch; })},
        {"steps", number<int>([](HarnessConfig& c) -> auto& { return c.train.steps; })},
        {"batch", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.train.batch; })},
        {"exemplars", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.train.exemplars; })},
        {"lr_lgs", number<double>([](HarnessConfig& c) -> auto& { return c.train.lr_lgs; })},
        {"lr_bas", number<double>([](HarnessConfig& c) -> auto& { return c.train.lr_bas; })},
        {"lambda", number<double>([](HarnessConfig& c) -> auto& { return c.train.lambda; })},
        {"kl_temperature", number<double>([](HarnessConfig& c) -> auto& { return c.train.kl_temperature; })},
        {"clip_norm", number<double>([](HarnessConfig& c) -> auto& { return c.train.clip_norm; })},
        {"centers", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.centers; })},
        {"neighbors", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.neighbors; })},
        {"rank", number<std::size_t>([](HarnessConfig& c) -> auto& { return c.metric.rank; })},
        {"metric_epochs", number<int>([](HarnessConfig& c) -> auto& { return c.metric.epochs; })},
        {"metric_lr", number<double>([](HarnessConfig& c) -> auto& { return c.metric.lr; })},
        {"ppl", [](HarnessConfig& c, const std::string&, const std::string& v) { c.train.ppl = parse_ppl(v); }},
        {"finetune_optimizer", [](HarnessConfig& c, const std::string&,
                                  const std::string& v) { c.finetune_optimizer = parse_optimizer(v); }},
        {"activation",
         [](HarnessConfig& c, const std::string&, const std::string& v) { c.activation = parse_activation(v); }},
    };
    return table;
}

}  // namespace

void apply_config_value(HarnessConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) {
        throw DomainError("unknown config key '" + key + "'");
    }
    it->second(cfg, key, value);
}

void apply_config(HarnessConfig& cfg, std::istream& is) {
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DomainError("config line " + std::to_string(n) + ": expected key = value");
        }
        apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void load_config(HarnessConfig& cfg, const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open config " + path.string());
    }
    apply_config(cfg, is);
}

}  // namespace tsw
