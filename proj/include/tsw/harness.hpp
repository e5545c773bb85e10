#pragma once

// Desk-scale pipeline: synthetic Gaussian-cluster tasks, base/fine-tune training, sensitivity
// probes and static merging baselines.
//
// Task k draws class c around a class centre in the first half of the input dimensions; the
// centres are shared by all tasks but each task permutes which label they carry, so a single
// static model cannot serve every task. The second half carries a per-task offset that makes
// tasks distinguishable from features alone.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tsw/merge.hpp"
#include "tsw/mlp.hpp"
#include "tsw/trainer.hpp"
#include "tsw/tswitch.hpp"

namespace tsw {

enum class Optimizer { Sgd, Adam };
Optimizer parse_optimizer(const std::string& name);

struct HarnessConfig {
    std::uint64_t seed = 7;
    std::size_t tasks = 3;
    std::size_t dim = 16;
    std::size_t classes = 4;
    std::size_t hidden = 32;
    Activation activation = Activation::Tanh;
    std::size_t train_size = 2000;
    std::size_t test_size = 500;
    double class_sep = 5.0;  // norm of each class centre
    double task_sep = 5.0;   // per-coordinate magnitude of the task offset
    double noise = 1.0;

    int pretrain_steps = 300;
    double pretrain_lr = 0.01;
    // Plain SGD keeps the task vector concentrated on the weights the task needs; Adam's
    // normalized steps move every weight by about the same amount.
    int finetune_steps = 600;
    double finetune_lr = 0.3;
    Optimizer finetune_optimizer = Optimizer::Sgd;
    std::size_t finetune_batch = 32;

    TrainConfig train;
    MetricTrainConfig metric;
    std::size_t centers = 20;
    std::size_t neighbors = 10;

    MlpSpec spec() const;
    void validate() const;
};

struct TaskData {
    std::string id;
    Dataset train;
    Dataset test;
};

std::string task_name(std::size_t k);
// Label of cluster c in task k.
int task_label(std::size_t task, int cluster, std::size_t classes);

std::vector<TaskData> gen_tasks(const HarnessConfig& cfg);

// "label,x0,...,x<d-1>" with a header row.
void write_csv(std::ostream& os, const Dataset& data);
Dataset read_csv(std::istream& is);
void save_csv(const std::filesystem::path& path, const Dataset& data);
Dataset load_csv(const std::filesystem::path& path);

Dataset concat(std::span<const Dataset> parts);

// Training inputs of every task labelled by cluster instead of by task label; the base model
// is pretrained on this.
Dataset pretext_dataset(std::span<const TaskData> tasks, std::size_t classes);

/// Mean cross-entropy over batches drawn with replacement. steps = 0 or lr = 0 returns the
/// input unchanged.
ParamSet fine_tune(const MlpSpec& spec, const ParamSet& init, const Dataset& data, int steps, double lr,
                   std::size_t batch, std::uint64_t seed, Optimizer opt = Optimizer::Adam);

/// Base model, fine-tuned models and the per-task exemplar subsets.
struct Workbench {
    HarnessConfig cfg;
    MlpSpec spec;
    std::vector<TaskData> tasks;
    ParamSet base;
    std::vector<ParamSet> fine_tuned;
    std::vector<Dataset> exemplars;

    TaskVector task_vector(std::size_t k) const { return diff(fine_tuned[k], base, tasks[k].id); }
};

Workbench prepare(const HarnessConfig& cfg);
Dataset exemplar_subset(const Dataset& train, std::size_t count, std::uint64_t root_seed, std::size_t task);

struct ProbeUnit {
    std::string name;
    std::vector<std::size_t> modules;
};

enum class Granularity { Module, ModuleType, Layer };
Granularity parse_granularity(const std::string& name);
std::vector<ProbeUnit> probe_units(const MlpSpec& spec, Granularity g);

struct ProbeRow {
    std::string task;
    std::string unit;
    double value = 0.0;  // alpha or eta
    double accuracy = 0.0;
    double reference = 0.0;  // fine-tuned accuracy
    double drop = 0.0;
};

// Replaces tau on one unit at a time and reports the accuracy drop on the task's test set.
std::vector<ProbeRow> probe_sparsity(const MlpSpec& spec, const ParamSet& base, const TaskVector& tau,
                                     const Dataset& test, std::span<const ProbeUnit> units, double alpha = 0.9);
std::vector<ProbeRow> probe_precision(const MlpSpec& spec, const ParamSet& base, const TaskVector& tau,
                                      const Dataset& test, std::span<const ProbeUnit> units);
// Every module binarized at alpha = 0 with knob beta * eta.
std::vector<ProbeRow> probe_scale(const MlpSpec& spec, const ParamSet& base, const TaskVector& tau,
                                  const Dataset& test, std::span<const double> etas);
std::vector<double> default_etas();

void write_probe_csv(std::ostream& os, std::span<const ProbeRow> rows);

ParamSet weight_average(const ParamSet& base, std::span<const ParamSet> deltas);
ParamSet task_arithmetic(const ParamSet& base, std::span<const ParamSet> deltas, double lambda);

struct StaticMergeScore {
    double lambda = 0.0;
    std::vector<double> accuracy;
    double mean = 0.0;
};

StaticMergeScore score_static(const MlpSpec& spec, const ParamSet& merged, std::span<const TaskData> tasks);
// Best mean accuracy over lambda in {0.1, ..., 1.0}.
StaticMergeScore best_task_arithmetic(const MlpSpec& spec, const ParamSet& base, std::span<const ParamSet> deltas,
                                      std::span<const TaskData> tasks);

// Reads "key = value" lines ('#' comments) into cfg; unknown keys throw DomainError.
void apply_config(HarnessConfig& cfg, std::istream& is);
void apply_config_value(HarnessConfig& cfg, const std::string& key, const std::string& value);
void load_config(HarnessConfig& cfg, const std::filesystem::path& path);

}  // namespace tsw
