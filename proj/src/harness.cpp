#include "tsw/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "tsw/error.hpp"
#include "tsw/rng.hpp"

namespace tsw {

MlpSpec HarnessConfig::spec() const { return MlpSpec{{dim, hidden, classes}, activation}; }

void HarnessConfig::validate() const {
    if (tasks == 0 || classes < 2 || dim < 2 || hidden == 0) {
        throw DomainError("need at least one task, two classes, two input dimensions and a hidden layer");
    }
    if (train_size == 0 || test_size == 0) {
        throw DomainError("train and test sizes must be positive");
    }
    if (!(noise >= 0.0) || !(class_sep >= 0.0) || !(task_sep >= 0.0)) {
        throw DomainError("noise and separations must be non-negative");
    }
    train.validate();
}

std::string task_name(std::size_t k) { return "task" + std::to_string(k); }

int task_label(std::size_t task, int cluster, std::size_t classes) {
    // Pairs cycle through (0,1), (2,3), (0,2), (1,3), (0,3), (1,2), ... within range.
    static constexpr int kPairs[6][2] = {{0, 1}, {2, 3}, {0, 2}, {1, 3}, {0, 3}, {1, 2}};
    const auto& p = kPairs[task % 6];
    const int c = static_cast<int>(classes);
    const int a = p[0] % c;
    const int b = p[1] % c == a ? (a + 1) % c : p[1] % c;
    return cluster == a ? b : cluster == b ? a : cluster;
}

std::vector<TaskData> gen_tasks(const HarnessConfig& cfg) {
    cfg.validate();
    const std::size_t half = cfg.dim / 2;
    std::vector<std::vector<double>> centres(cfg.classes, std::vector<double>(half));
    {
        auto rng = make_rng(cfg.seed, "class-centres");
        std::normal_distribution<double> normal;
        for (auto& c : centres) {
            for (double& v : c) {
                v = normal(rng);
            }
            const double n = l2_norm(c);
            for (double& v : c) {
                v = n > 0.0 ? v * cfg.class_sep / n : 0.0;
            }
        }
    }
    std::vector<TaskData> out;
    for (std::size_t k = 0; k < cfg.tasks; ++k) {
        std::vector<double> offset(cfg.dim - half);
        auto orng = make_rng(cfg.seed, "task-offset", k);
        for (double& v : offset) {
            v = (orng() & 1u) ? cfg.task_sep : -cfg.task_sep;
        }
        auto sample = [&](std::size_t count, const char* split) {
            Dataset d;
            d.dim = cfg.dim;
            auto rng = make_rng(cfg.seed, split, k);
            std::normal_distribution<double> noise(0.0, cfg.noise);
            std::vector<double> x(cfg.dim);
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t cluster = static_cast<std::size_t>(rng() % cfg.classes);
                for (std::size_t j = 0; j < half; ++j) {
                    x[j] = centres[cluster][j] + noise(rng);
                }
                for (std::size_t j = half; j < cfg.dim; ++j) {
                    x[j] = offset[j - half] + noise(rng);
                }
                d.add(x, task_label(k, static_cast<int>(cluster), cfg.classes));
            }
            return d;
        };
        out.push_back(TaskData{task_name(k), sample(cfg.train_size, "train"), sample(cfg.test_size, "test")});
    }
    return out;
}

void write_csv(std::ostream& os, const Dataset& data) {
    os << "label";
    for (std::size_t j = 0; j < data.dim; ++j) {
        os << ",x" << j;
    }
    os << '\n';
    os.precision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        os << data.labels[i];
        for (double v : data.input(i)) {
            os << ',' << v;
        }
        os << '\n';
    }
}

Dataset read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("label", 0) != 0) {
        throw StructuralError("CSV must start with a 'label,x0,...' header");
    }
    Dataset d;
    d.dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    std::vector<double> x;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::string cell;
        x.clear();
        std::getline(ls, cell, ',');
        int label = 0;
        try {
            label = std::stoi(cell);
            while (std::getline(ls, cell, ',')) {
                x.push_back(std::stod(cell));
            }
        } catch (const std::exception&) {
            throw StructuralError("malformed CSV row " + std::to_string(row));
        }
        if (x.size() != d.dim) {
            throw StructuralError("CSV row " + std::to_string(row) + " has " + std::to_string(x.size()) +
                                  " features, header declares " + std::to_string(d.dim));
        }
        d.add(x, label);
    }
    return d;
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
    write_csv(os, data);
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return read_csv(is);
}

Dataset concat(std::span<const Dataset> parts) {
    Dataset out;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            out.add(p.input(i), p.labels[i]);
        }
    }
    return out;
}

Dataset pretext_dataset(std::span<const TaskData> tasks, std::size_t classes) {
    Dataset out;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        const auto& d = tasks[k].train;
        for (std::size_t i = 0; i < d.size(); ++i) {
            // The swap is its own inverse.
            out.add(d.input(i), task_label(k, d.labels[i], classes));
        }
    }
    return out;
}

Optimizer parse_optimizer(const std::string& name) {
    if (name == "sgd") {
        return Optimizer::Sgd;
    }
    if (name == "adam") {
        return Optimizer::Adam;
    }
    throw DomainError("unknown optimizer '" + name + "' (sgd, adam)");
}

ParamSet fine_tune(const MlpSpec& spec, const ParamSet& init, const Dataset& data, int steps, double lr,
                   std::size_t batch, std::uint64_t seed, Optimizer opt) {
    spec.check(init);
    if (steps < 0 || !(lr >= 0.0)) {
        throw DomainError("steps and learning rate must be non-negative");
    }
    if (steps == 0 || lr == 0.0) {
        return init;
    }
    if (data.size() == 0 || batch == 0) {
        throw DomainError("fine-tuning needs data and a positive batch size");
    }
    for (int y : data.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= spec.classes()) {
            throw DomainError("label " + std::to_string(y) + " outside the model's classes");
        }
    }
    ParamSet p = init;
    std::vector<std::vector<double>> m1, m2;
    for (const auto& m : p.modules()) {
        m1.emplace_back(m.values.size(), 0.0);
        m2.emplace_back(m.values.size(), 0.0);
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto rng = make_rng(seed, "fine-tune");
    std::vector<std::size_t> rows(batch);
    std::vector<int> labels(batch);
    for (int step = 0; step < steps; ++step) {
        for (std::size_t i = 0; i < batch; ++i) {
            rows[i] = static_cast<std::size_t>(rng() % data.size());
            labels[i] = data.labels[rows[i]];
        }
        ad::Tape tape;
        std::vector<std::vector<ad::Var>> leaves;
        for (const auto& m : p.modules()) {
            leaves.push_back(tape.leaves(m.values));
        }
        std::vector<std::span<const ad::Var>> spans(leaves.begin(), leaves.end());
        const auto logits = forward_batch<ad::Var>(spec, spans, data, rows);
        const auto loss = cross_entropy(logits, std::span<const int>(labels));
        const auto g = tape.backward(loss);
        const double t = step + 1.0;
        const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
        for (std::size_t l = 0; l < p.size(); ++l) {
            auto& v = p.at(l).values;
            for (std::size_t j = 0; j < v.size(); ++j) {
                const double gj = g[leaves[l][j]];
                if (opt == Optimizer::Sgd) {
                    v[j] -= lr * gj;
                    continue;
                }
                m1[l][j] = b1 * m1[l][j] + (1.0 - b1) * gj;
                m2[l][j] = b2 * m2[l][j] + (1.0 - b2) * gj * gj;
                v[j] -= lr * (m1[l][j] / c1) / (std::sqrt(m2[l][j] / c2) + eps);
            }
        }
    }
    return p;
}

Dataset exemplar_subset(const Dataset& train, std::size_t count, std::uint64_t root_seed, std::size_t task) {
    const auto rows = pick_exemplars(train.size(), count, derive_seed(root_seed, "exemplar-pick", task));
    return train.subset(rows);
}

Workbench prepare(const HarnessConfig& cfg) {
    Workbench w;
    w.cfg = cfg;
    w.spec = cfg.spec();
    w.tasks = gen_tasks(cfg);
    const Dataset pool = pretext_dataset(w.tasks, cfg.classes);
    w.base = fine_tune(w.spec, w.spec.init(derive_seed(cfg.seed, "init")), pool, cfg.pretrain_steps, cfg.pretrain_lr,
                       cfg.finetune_batch, derive_seed(cfg.seed, "pretrain"));
    for (std::size_t k = 0; k < w.tasks.size(); ++k) {
        w.fine_tuned.push_back(fine_tune(w.spec, w.base, w.tasks[k].train, cfg.finetune_steps, cfg.finetune_lr,
                                         cfg.finetune_batch, derive_seed(cfg.seed, "finetune", k),
                                         cfg.finetune_optimizer));
        w.exemplars.push_back(exemplar_subset(w.tasks[k].train, cfg.train.exemplars, cfg.seed, k));
    }
    return w;
}

Granularity parse_granularity(const std::string& name) {
    if (name == "module") {
        return Granularity::Module;
    }
    if (name == "module-type" || name == "type") {
        return Granularity::ModuleType;
    }
    if (name == "layer") {
        return Granularity::Layer;
    }
    throw DomainError("unknown probe unit '" + name + "' (module, module-type, layer)");
}

std::vector<ProbeUnit> probe_units(const MlpSpec& spec, Granularity g) {
    const auto names = spec.module_names();
    std::vector<ProbeUnit> out;
    switch (g) {
        case Granularity::Module:
            for (std::size_t i = 0; i < names.size(); ++i) {
                out.push_back({names[i], {i}});
            }
            break;
        case Granularity::ModuleType:
            out.push_back({"weight", {}});
            out.push_back({"bias", {}});
            for (std::size_t i = 0; i < names.size(); ++i) {
                out[i % 2].modules.push_back(i);
            }
            break;
        case Granularity::Layer:
            for (std::size_t l = 0; l < spec.layer_count(); ++l) {
                out.push_back({"fc" + std::to_string(l), {2 * l, 2 * l + 1}});
            }
            break;
    }
    return out;
}

namespace {

template <class Replace>
std::vector<ProbeRow> probe_units_with(const MlpSpec& spec, const ParamSet& base, const TaskVector& tau,
                                       const Dataset& test, std::span<const ProbeUnit> units, double value,
                                       Replace replace) {
    const double reference = evaluate(spec, base, tau.delta, test);
    std::vector<ProbeRow> rows;
    for (const auto& u : units) {
        ParamSet d = tau.delta;
        for (auto m : u.modules) {
            d.at(m).values = replace(d.at(m).values);
        }
        const double acc = evaluate(spec, base, d, test);
        rows.push_back({tau.task_id, u.name, value, acc, reference, reference - acc});
    }
    return rows;
}

std::vector<double> binarize(std::span<const double> v, double alpha) {
    return build_switch(v, alpha).reconstruct();
}

}  // namespace

std::vector<ProbeRow> probe_sparsity(const MlpSpec& spec, const ParamSet& base, const TaskVector& tau,
                                     const Dataset& test, std::span<const ProbeUnit> units, double alpha) {
    return probe_units_with(spec, base, tau, test, units, alpha,
                            [alpha](const std::vector<double>& v) { return pulse_sparsify(v, alpha); });
}

std::vector<ProbeRow> probe_precision(const MlpSpec& spec, const ParamSet& base, const TaskVector& tau,
                                      const Dataset& test, std::span<const ProbeUnit> units) {
    return probe_units_with(spec, base, tau, test, units, 0.0,
                            [](const std::vector<double>& v) { return binarize(v, 0.0); });
}

std::vector<ProbeRow> probe_scale(const MlpSpec& spec, const ParamSet& base, const TaskVector& tau,
                                  const Dataset& test, std::span<const double> etas) {
    const double reference = evaluate(spec, base, tau.delta, test);
    std::vector<ProbeRow> rows;
    for (double eta : etas) {
        ParamSet d = tau.delta;
        for (auto& m : d.modules()) {
            auto sw = build_switch(m.values, 0.0);
            sw.knob *= eta;
            m.values = sw.reconstruct();
        }
        const double acc = evaluate(spec, base, d, test);
        rows.push_back({tau.task_id, "all", eta, acc, reference, reference - acc});
    }
    return rows;
}

std::vector<double> default_etas() {
    std::vector<double> e;
    for (int i = 1; i <= 20; ++i) {
        e.push_back(i / 10.0);
    }
    return e;
}

void write_probe_csv(std::ostream& os, std::span<const ProbeRow> rows) {
    os << "task,unit,value,accuracy,finetuned_accuracy,drop\n";
    for (const auto& r : rows) {
        os << r.task << ',' << r.unit << ',' << r.value << ',' << r.accuracy << ',' << r.reference << ',' << r.drop
           << '\n';
    }
}

ParamSet weight_average(const ParamSet& base, std::span<const ParamSet> deltas) {
    if (deltas.empty()) {
        return base;
    }
    return task_arithmetic(base, deltas, 1.0 / static_cast<double>(deltas.size()));
}

ParamSet task_arithmetic(const ParamSet& base, std::span<const ParamSet> deltas, double lambda) {
    ParamSet out = base;
    for (const auto& d : deltas) {
        out = apply_delta(out, d, lambda);
    }
    return out;
}

StaticMergeScore score_static(const MlpSpec& spec, const ParamSet& merged, std::span<const TaskData> tasks) {
    StaticMergeScore s;
    for (const auto& t : tasks) {
        s.accuracy.push_back(accuracy(spec, merged, t.test));
    }
    s.mean = s.accuracy.empty() ? 0.0
                                : std::accumulate(s.accuracy.begin(), s.accuracy.end(), 0.0) /
                                      static_cast<double>(s.accuracy.size());
    return s;
}

StaticMergeScore best_task_arithmetic(const MlpSpec& spec, const ParamSet& base, std::span<const ParamSet> deltas,
                                      std::span<const TaskData> tasks) {
    StaticMergeScore best;
    best.mean = -1.0;
    for (int i = 1; i <= 10; ++i) {
        const double lambda = i / 10.0;
        auto s = score_static(spec, task_arithmetic(base, deltas, lambda), tasks);
        s.lambda = lambda;
        if (s.mean > best.mean) {
            best = s;
        }
    }
    return best;
}

}  // namespace tsw
