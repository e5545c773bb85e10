// tswc: command-line front end for task-switch compression and merging.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsw/container.hpp"
#include "tsw/error.hpp"
#include "tsw/harness.hpp"
#include "tsw/merge.hpp"
#include "tsw/rng.hpp"
#include "tsw/trainer.hpp"
#include "tsw/tswitch.hpp"

namespace fs = std::filesystem;
using namespace tsw;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;

    HarnessConfig load() const {
        HarnessConfig cfg;
        if (!config.empty()) {
            load_config(cfg, config);
        }
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw DomainError("--set expects key=value, got '" + kv + "'");
            }
            apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) {
            cfg.seed = *seed;
        }
        return cfg;
    }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "root seed (overrides the config)");
    app->add_option("--set", c.overrides, "config override key=value (repeatable)");
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write " + path);
    }
    return os;
}

// Deltas of every task in the bundles, as parameter sets named by the model layout.
std::vector<std::pair<std::string, ParamSet>> load_deltas(const MlpSpec& spec, const std::vector<std::string>& paths) {
    const auto names = spec.module_names();
    std::vector<std::pair<std::string, ParamSet>> out;
    for (const auto& p : paths) {
        for (const auto& t : load_bundle(p)) {
            out.emplace_back(t.task_id, t.to_params(names));
        }
    }
    return out;
}

ParamSet load_model(const MlpSpec& spec, const std::string& path) {
    auto p = load_params(path, spec.module_names());
    spec.check(p);
    return p;
}

std::vector<QuerySet> query_sets(const HarnessConfig& cfg, const MlpSpec& spec, const ParamSet& base,
                                 const std::vector<std::string>& data, const std::vector<std::string>& ids) {
    if (!ids.empty() && ids.size() != data.size()) {
        throw StructuralError("give one --task per --data file");
    }
    std::vector<QuerySet> qs;
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto train = load_csv(data[k]);
        const auto ex = exemplar_subset(train, std::min(cfg.train.exemplars, train.size()), cfg.seed, k);
        qs.push_back(build_query_set(spec, base, ex, ids.empty() ? task_name(k) : ids[k]));
    }
    return qs;
}

int run(int argc, char** argv) {
    CLI::App app{"Task-switch compression, storage and dynamic merging"};
    app.require_subcommand(1);

    // gen-tasks
    Common gen_c;
    std::string gen_out = ".";
    auto* gen = app.add_subcommand("gen-tasks", "Write synthetic task CSVs (train/test per task, pretext train)");
    add_common(gen, gen_c);
    gen->add_option("-o,--out", gen_out, "output directory");
    gen->callback([&] {
        const auto cfg = gen_c.load();
        const auto tasks = gen_tasks(cfg);
        fs::create_directories(gen_out);
        for (const auto& t : tasks) {
            save_csv(fs::path(gen_out) / (t.id + "_train.csv"), t.train);
            save_csv(fs::path(gen_out) / (t.id + "_test.csv"), t.test);
        }
        save_csv(fs::path(gen_out) / "pretext_train.csv", pretext_dataset(tasks, cfg.classes));
        std::cout << "wrote " << tasks.size() << " tasks to " << gen_out << '\n';
    });

    // fine-tune
    Common ft_c;
    std::string ft_data, ft_base, ft_out;
    std::optional<std::string> ft_opt;
    std::optional<int> ft_steps;
    std::optional<double> ft_lr;
    auto* ft = app.add_subcommand("fine-tune", "Train a model on a CSV (from --base, or from a seeded random init)");
    add_common(ft, ft_c);
    ft->add_option("--data", ft_data, "training CSV")->required()->check(CLI::ExistingFile);
    ft->add_option("--base", ft_base, "starting weights (.tswc)");
    ft->add_option("--steps", ft_steps, "optimizer steps");
    ft->add_option("--lr", ft_lr, "learning rate");
    ft->add_option("--optimizer", ft_opt, "sgd or adam (default: adam from scratch, the config's choice from --base)")->check(CLI::IsMember({"sgd", "adam"}));
    ft->add_option("-o,--out", ft_out, "output weights (.tswc)")->required();
    ft->callback([&] {
        const auto cfg = ft_c.load();
        const auto spec = cfg.spec();
        const auto data = load_csv(ft_data);
        const ParamSet init = ft_base.empty() ? spec.init(derive_seed(cfg.seed, "init")) : load_model(spec, ft_base);
        const int steps = ft_steps.value_or(ft_base.empty() ? cfg.pretrain_steps : cfg.finetune_steps);
        const double lr = ft_lr.value_or(ft_base.empty() ? cfg.pretrain_lr : cfg.finetune_lr);
        const auto p = fine_tune(spec, init, data, steps, lr, cfg.finetune_batch, derive_seed(cfg.seed, "fine-tune-cli"),
                                 ft_opt ? parse_optimizer(*ft_opt)
                                        : ft_base.empty() ? Optimizer::Adam : cfg.finetune_optimizer);
        save_params(ft_out, p, "model");
        std::printf("train accuracy %.4f\n", accuracy(spec, p, data));
    });

    // tswitch
    Common ts_c;
    std::string ts_base, ts_ft, ts_task = "task0", ts_out;
    double ts_alpha = 0.9;
    auto* ts = app.add_subcommand("tswitch", "Rule-based compression: impulse mask, polarity, knob");
    add_common(ts, ts_c);
    ts->add_option("--base", ts_base)->required()->check(CLI::ExistingFile);
    ts->add_option("--finetuned", ts_ft)->required()->check(CLI::ExistingFile);
    ts->add_option("--task", ts_task, "task id stored in the bundle");
    ts->add_option("--alpha", ts_alpha, "pruning rate")->check(CLI::Range(0.0, 1.0));
    ts->add_option("-o,--out", ts_out)->required();
    ts->callback([&] {
        const auto spec = ts_c.load().spec();
        const auto tv = diff(load_model(spec, ts_ft), load_model(spec, ts_base), ts_task);
        const auto sw = build_task_switch(tv, ts_alpha);
        StoredTask st{ts_task, {}};
        for (const auto& m : sw.modules) {
            st.modules.push_back(encode_best(to_quantized(m)));
        }
        save_bundle(ts_out, std::span<const StoredTask>(&st, 1));
        std::cout << "wrote " << ts_out << '\n';
    });

    // compress
    Common cp_c;
    std::string cp_base, cp_ft, cp_data, cp_task = "task0", cp_out, cp_log;
    std::optional<std::string> cp_ppl;
    std::optional<double> cp_lambda;
    std::optional<int> cp_steps;
    std::size_t cp_index = 0;
    auto* cp = app.add_subcommand("compress", "Learned compression (gates + bit-widths) of one task vector");
    add_common(cp, cp_c);
    cp->add_option("--base", cp_base)->required()->check(CLI::ExistingFile);
    cp->add_option("--finetuned", cp_ft)->required()->check(CLI::ExistingFile);
    cp->add_option("--data", cp_data, "task training CSV (exemplars are drawn from it)")->required()->check(
        CLI::ExistingFile);
    cp->add_option("--task", cp_task, "task id stored in the bundle");
    cp->add_option("--task-index", cp_index, "task ordinal for exemplar seeding");
    cp->add_option("--ppl", cp_ppl, "alignment loss")->check(CLI::IsMember({"kl", "mse", "cka"}));
    cp->add_option("--lambda", cp_lambda, "alignment weight");
    cp->add_option("--steps", cp_steps, "optimization steps");
    cp->add_option("--log", cp_log, "progress CSV");
    cp->add_option("-o,--out", cp_out)->required();
    cp->callback([&] {
        auto cfg = cp_c.load();
        if (cp_ppl) {
            cfg.train.ppl = parse_ppl(*cp_ppl);
        }
        if (cp_lambda) {
            cfg.train.lambda = *cp_lambda;
        }
        if (cp_steps) {
            cfg.train.steps = *cp_steps;
        }
        cfg.train.seed = derive_seed(cfg.seed, "compress", cp_index);
        const auto spec = cfg.spec();
        const auto train_data = load_csv(cp_data);
        const auto ex = exemplar_subset(train_data, std::min(cfg.train.exemplars, train_data.size()), cfg.seed,
                                        cp_index);
        const auto problem =
            TrainProblem::build(spec, load_model(spec, cp_base), load_model(spec, cp_ft), ex, cp_task);
        const auto result = train(problem, cfg.train);
        if (!cp_log.empty()) {
            auto os = open_out(cp_log);
            write_log_csv(os, result.log);
        }
        const auto st = result.compressed.store();
        save_bundle(cp_out, std::span<const StoredTask>(&st, 1));
        std::printf("task %s sparsity %.4f\n", cp_task.c_str(), result.compressed.sparsity());
    });

    // inspect
    Common in_c;
    std::string in_path;
    auto* in = app.add_subcommand("inspect", "Per-module storage report of a bundle");
    add_common(in, in_c);
    in->add_option("bundle", in_path)->required()->check(CLI::ExistingFile);
    in->callback([&] {
        const auto names = in_c.load().spec().module_names();
        const auto tasks = load_bundle(in_path);
        std::printf("%-8s %-12s %-6s %9s %9s %8s %2s %4s %10s %10s %10s %12s\n", "task", "module", "format", "n", "nnz",
                    "alpha", "b", "c", "payload", "file_bits", "formula_bits", "expected");
        for (const auto& t : tasks) {
            for (std::size_t i = 0; i < t.modules.size(); ++i) {
                const auto& m = t.modules[i];
                const auto& h = m.header;
                const std::string name = t.modules.size() == names.size() ? names[i] : "#" + std::to_string(i);
                const bool quantized = h.format != Format::Dense;
                const std::size_t nnz = quantized ? m.quantized.nnz()
                                                  : static_cast<std::size_t>(std::count_if(
                                                        m.dense.begin(), m.dense.end(), [](float v) { return v != 0; }));
                const double alpha = h.size == 0 ? 1.0 : 1.0 - static_cast<double>(nnz) / h.size;
                const std::size_t formula = h.format == Format::Sass ? kFormulaHeaderBits + m.payload_bits : 0;
                std::string expected = "-";
                if (h.format == Format::Sass) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.1f", expected_bits(h.size, h.group, alpha, h.bits));
                    expected = buf;
                }
                std::printf("%-8s %-12s %-6s %9u %9zu %8.4f %2d %4u %10zu %10zu %10s %12s\n", t.task_id.c_str(),
                            name.c_str(), to_string(h.format).c_str(), h.size, nnz, alpha, h.bits,
                            h.format == Format::Sass ? h.group : 0, m.payload_bits, kHeaderBits + m.payload_bits,
                            formula ? std::to_string(formula).c_str() : "-", expected.c_str());
            }
            std::printf("%-8s total file bytes %zu\n", t.task_id.c_str(), t.file_bytes);
        }
    });

    // evaluate
    Common ev_c;
    std::string ev_base, ev_bundle, ev_data;
    auto* ev = app.add_subcommand("evaluate", "Accuracy of base + a bundle's task vector on a CSV");
    add_common(ev, ev_c);
    ev->add_option("--base", ev_base)->required()->check(CLI::ExistingFile);
    ev->add_option("--bundle", ev_bundle, "task-vector bundle (omit to score the base)");
    ev->add_option("--data", ev_data)->required()->check(CLI::ExistingFile);
    ev->callback([&] {
        const auto spec = ev_c.load().spec();
        const auto base = load_model(spec, ev_base);
        const auto data = load_csv(ev_data);
        if (ev_bundle.empty()) {
            std::printf("base accuracy %.4f\n", accuracy(spec, base, data));
            return;
        }
        for (const auto& [id, delta] : load_deltas(spec, {ev_bundle})) {
            std::printf("%s accuracy %.4f\n", id.c_str(), evaluate(spec, base, delta, data));
        }
    });

    // probe
    Common pr_c;
    std::string pr_kind, pr_base, pr_ft, pr_data, pr_unit = "module", pr_out, pr_task = "task0";
    double pr_alpha = 0.9;
    auto* pr = app.add_subcommand("probe", "Sensitivity probes: sparsity, precision, scale");
    add_common(pr, pr_c);
    pr->add_option("kind", pr_kind)->required()->check(CLI::IsMember({"sparsity", "precision", "scale"}));
    pr->add_option("--base", pr_base)->required()->check(CLI::ExistingFile);
    pr->add_option("--finetuned", pr_ft)->required()->check(CLI::ExistingFile);
    pr->add_option("--data", pr_data, "test CSV")->required()->check(CLI::ExistingFile);
    pr->add_option("--task", pr_task);
    pr->add_option("--unit", pr_unit, "module, module-type or layer");
    pr->add_option("--alpha", pr_alpha, "pruning rate for the sparsity probe");
    pr->add_option("-o,--out", pr_out, "CSV output (stdout when omitted)");
    pr->callback([&] {
        const auto spec = pr_c.load().spec();
        const auto tv = diff(load_model(spec, pr_ft), load_model(spec, pr_base), pr_task);
        const auto base = load_model(spec, pr_base);
        const auto test = load_csv(pr_data);
        const auto units = probe_units(spec, parse_granularity(pr_unit));
        std::vector<ProbeRow> rows;
        if (pr_kind == "sparsity") {
            rows = probe_sparsity(spec, base, tv, test, units, pr_alpha);
        } else if (pr_kind == "precision") {
            rows = probe_precision(spec, base, tv, test, units);
        } else {
            rows = probe_scale(spec, base, tv, test, default_etas());
        }
        if (pr_out.empty()) {
            write_probe_csv(std::cout, rows);
        } else {
            auto os = open_out(pr_out);
            write_probe_csv(os, rows);
        }
    });

    // build-index
    Common bi_c;
    std::string bi_base, bi_out;
    std::vector<std::string> bi_data, bi_ids;
    bool bi_raw = false;
    std::optional<std::size_t> bi_centers;
    auto* bi = app.add_subcommand("build-index", "Reference index from per-task exemplar features");
    add_common(bi, bi_c);
    bi->add_option("--base", bi_base)->required()->check(CLI::ExistingFile);
    bi->add_option("--data", bi_data, "training CSV per task, in task order")->required()->check(CLI::ExistingFile);
    bi->add_option("--task", bi_ids, "task id per --data");
    bi->add_option("--centers", bi_centers, "K-Means centres per task");
    bi->add_flag("--raw", bi_raw, "keep every exemplar, raw Euclidean distance");
    bi->add_option("-o,--out", bi_out)->required();
    bi->callback([&] {
        const auto cfg = bi_c.load();
        const auto spec = cfg.spec();
        const auto qs = query_sets(cfg, spec, load_model(spec, bi_base), bi_data, bi_ids);
        const auto idx = bi_raw ? raw_index(qs) : center_index(qs, bi_centers.value_or(cfg.centers), cfg.seed);
        save_index(bi_out, idx);
        std::printf("index: %zu tasks x %zu references, dim %zu\n", idx.tasks(), idx.per_task, idx.dim);
    });

    // train-metric
    Common tm_c;
    std::string tm_base, tm_index, tm_out, tm_log;
    std::vector<std::string> tm_data, tm_ids;
    auto* tm = app.add_subcommand("train-metric", "Learn the low-rank projection for an index");
    add_common(tm, tm_c);
    tm->add_option("--base", tm_base)->required()->check(CLI::ExistingFile);
    tm->add_option("--index", tm_index)->required()->check(CLI::ExistingFile);
    tm->add_option("--data", tm_data, "training CSV per task, same order as the index")->required()->check(
        CLI::ExistingFile);
    tm->add_option("--task", tm_ids, "task id per --data");
    tm->add_option("--log", tm_log, "loss per epoch CSV");
    tm->add_option("-o,--out", tm_out)->required();
    tm->callback([&] {
        auto cfg = tm_c.load();
        cfg.metric.seed = derive_seed(cfg.seed, "metric");
        const auto spec = cfg.spec();
        const auto qs = query_sets(cfg, spec, load_model(spec, tm_base), tm_data, tm_ids);
        auto idx = load_index(tm_index);
        for (std::size_t k = 0; k < qs.size(); ++k) {
            if (k >= idx.tasks() || idx.task_ids[k] != qs[k].task_id) {
                throw StructuralError("--data/--task order does not match the index");
            }
        }
        const auto res = train_metric(LabelledFeatures::from_queries(qs), idx, cfg.metric);
        idx.projection = res.projection;
        save_index(tm_out, idx);
        if (!tm_log.empty()) {
            auto os = open_out(tm_log);
            os << "epoch,loss\n";
            for (std::size_t e = 0; e < res.loss.size(); ++e) {
                os << e << ',' << res.loss[e] << '\n';
            }
        }
        std::printf("metric loss %.6f -> %.6f\n", res.loss.front(), res.loss.back());
    });

    // merge-eval
    Common me_c;
    std::string me_base, me_index;
    std::vector<std::string> me_bundles, me_data;
    std::optional<std::size_t> me_neighbors;
    auto* me = app.add_subcommand("merge-eval", "Accuracy of KNN-weighted dynamic merging");
    add_common(me, me_c);
    me->add_option("--base", me_base)->required()->check(CLI::ExistingFile);
    me->add_option("--bundle", me_bundles, "task-vector bundles")->required()->check(CLI::ExistingFile);
    me->add_option("--index", me_index)->required()->check(CLI::ExistingFile);
    me->add_option("--data", me_data, "test CSV per task")->required()->check(CLI::ExistingFile);
    me->add_option("--neighbors", me_neighbors, "C nearest references");
    me->callback([&] {
        const auto cfg = me_c.load();
        const auto spec = cfg.spec();
        const auto base = load_model(spec, me_base);
        const auto idx = load_index(me_index);
        std::map<std::string, ParamSet> by_id;
        for (auto& [id, d] : load_deltas(spec, me_bundles)) {
            by_id.emplace(id, std::move(d));
        }
        std::vector<SparseDelta> deltas;
        for (const auto& id : idx.task_ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw StructuralError("no bundle holds task '" + id + "'");
            }
            deltas.push_back(SparseDelta::from_params(id, it->second));
        }
        double mean = 0.0;
        std::printf("data,accuracy\n");
        for (const auto& path : me_data) {
            const double acc = merged_accuracy(spec, base, deltas, idx, me_neighbors.value_or(cfg.neighbors),
                                               load_csv(path));
            mean += acc / static_cast<double>(me_data.size());
            std::printf("%s,%.4f\n", path.c_str(), acc);
        }
        std::printf("mean,%.4f\n", mean);
    });

    // baseline
    Common bl_c;
    std::string bl_mode = "weight-average", bl_base;
    std::vector<std::string> bl_ft, bl_data;
    std::optional<double> bl_lambda;
    auto* bl = app.add_subcommand("baseline", "Static merging baselines");
    add_common(bl, bl_c);
    bl->add_option("--mode", bl_mode)->check(CLI::IsMember({"weight-average", "task-arithmetic"}));
    bl->add_option("--lambda", bl_lambda, "task-arithmetic scale (grid-searched when omitted)");
    bl->add_option("--base", bl_base)->required()->check(CLI::ExistingFile);
    bl->add_option("--finetuned", bl_ft, "fine-tuned weights per task")->required()->check(CLI::ExistingFile);
    bl->add_option("--data", bl_data, "test CSV per task")->required()->check(CLI::ExistingFile);
    bl->callback([&] {
        const auto spec = bl_c.load().spec();
        const auto base = load_model(spec, bl_base);
        std::vector<ParamSet> deltas;
        for (const auto& p : bl_ft) {
            deltas.push_back(diff(load_model(spec, p), base).delta);
        }
        std::vector<TaskData> tasks;
        for (std::size_t k = 0; k < bl_data.size(); ++k) {
            tasks.push_back(TaskData{task_name(k), {}, load_csv(bl_data[k])});
        }
        StaticMergeScore s;
        if (bl_mode == "weight-average") {
            s = score_static(spec, weight_average(base, deltas), tasks);
        } else if (bl_lambda) {
            s = score_static(spec, task_arithmetic(base, deltas, *bl_lambda), tasks);
            s.lambda = *bl_lambda;
        } else {
            s = best_task_arithmetic(spec, base, deltas, tasks);
        }
        std::printf("data,accuracy\n");
        for (std::size_t k = 0; k < tasks.size(); ++k) {
            std::printf("%s,%.4f\n", bl_data[k].c_str(), s.accuracy[k]);
        }
        std::printf("mean,%.4f\n", s.mean);
        if (bl_mode == "task-arithmetic") {
            std::printf("lambda,%.2f\n", s.lambda);
        }
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CorruptionError& e) {
        std::cerr << "corrupt input: " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
    }
    return 1;
}
