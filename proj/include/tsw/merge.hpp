#pragma once

// Inference-time merging. Each task keeps exemplar features (from the base model's feature
// extractor), optionally condensed to K-Means centers. An input's weight on task k is the share
// of its C nearest references that belong to k, under either raw Euclidean distance or
// ||L(a - b)|| with a learned r x e projection L.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tsw/mlp.hpp"
#include "tsw/vector_core.hpp"

namespace tsw {

/// Row-major N x dim feature matrix for one task.
struct QuerySet {
    std::string task_id;
    std::size_t dim = 0;
    std::vector<double> features;

    std::size_t size() const noexcept { return dim == 0 ? 0 : features.size() / dim; }
    std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
};

QuerySet build_query_set(const MlpSpec& spec, const ParamSet& base, const Dataset& exemplars,
                         const std::string& task_id);

struct KMeansResult {
    std::vector<double> centroids;  // E x dim
    std::vector<std::size_t> assignment;
    int iterations = 0;
    std::vector<double> objective;  // sum of squared distances after each assignment step
};

/// Farthest-point seeding from a seeded first pick, then Lloyd iterations until the assignment
/// stops changing or 100 iterations. An emptied cluster takes the point farthest from its centre.
KMeansResult kmeans(std::span<const double> points, std::size_t dim, std::size_t clusters, std::uint64_t seed,
                    int max_iterations = 100);

/// r x e projection; rank 0 means raw Euclidean distance.
struct Projection {
    std::size_t rank = 0;
    std::size_t dim = 0;
    std::vector<double> matrix;

    bool is_identity() const noexcept { return rank == 0; }
    std::vector<double> apply(std::span<const double> x) const;
    static Projection gaussian(std::size_t rank, std::size_t dim, std::uint64_t seed);
};

double metric_distance(std::span<const double> a, std::span<const double> b, const Projection& L);

/// References grouped by task: task k owns rows [k * per_task, (k + 1) * per_task).
struct ReferenceIndex {
    std::vector<std::string> task_ids;
    std::size_t per_task = 0;
    std::size_t dim = 0;
    std::vector<double> points;
    Projection projection;

    std::size_t tasks() const noexcept { return task_ids.size(); }
    std::size_t size() const noexcept { return task_ids.size() * per_task; }
    std::size_t label(std::size_t ref) const noexcept { return ref / per_task; }
    std::span<const double> point(std::size_t ref) const { return {points.data() + ref * dim, dim}; }
};

// Every query as a reference, raw Euclidean. Query sets must be the same size.
ReferenceIndex raw_index(std::span<const QuerySet> queries);
// E centres per task.
ReferenceIndex center_index(std::span<const QuerySet> queries, std::size_t centers, std::uint64_t seed);

// Indices of the C nearest references; ties go to the lower index.
std::vector<std::size_t> nearest_references(std::span<const double> feature, const ReferenceIndex& index,
                                            std::size_t neighbors);

struct TaskWeights {
    std::vector<std::size_t> counts;  // per task; sums to neighbors
    std::size_t neighbors = 0;

    double operator[](std::size_t k) const { return static_cast<double>(counts.at(k)) / static_cast<double>(neighbors); }
    std::vector<double> values() const;
};

TaskWeights knn_weights(std::span<const double> feature, const ReferenceIndex& index, std::size_t neighbors);

struct MetricTrainConfig {
    int epochs = 100;
    double lr = 0.5;
    std::size_t rank = 32;
    std::size_t neighbors = 10;
    double distance_floor = 1e-8;
    double ratio_floor = 1e-12;
    std::uint64_t seed = 0;
};

/// Labelled training features for the metric: feature rows with their task ordinal.
struct LabelledFeatures {
    std::size_t dim = 0;
    std::vector<double> features;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
    static LabelledFeatures from_queries(std::span<const QuerySet> queries);
};

/// Mean over samples of -log(sum of inverse distances to same-task neighbours / sum over all
/// C neighbours), neighbours taken under L.
double metric_loss(const LabelledFeatures& data, const ReferenceIndex& index, const Projection& L,
                   const MetricTrainConfig& cfg);

struct MetricTrainResult {
    Projection projection;
    std::vector<double> loss;  // before each epoch's update, then the final value
};

MetricTrainResult train_metric(const LabelledFeatures& data, const ReferenceIndex& index,
                               const MetricTrainConfig& cfg);

/// Nonzero entries of a task vector, module by module.
struct SparseDelta {
    std::string task_id;
    std::vector<std::vector<std::uint32_t>> positions;
    std::vector<std::vector<double>> values;

    static SparseDelta from_params(const std::string& task_id, const ParamSet& delta);
};

// theta + sum_k w_k * delta_k, touching only the union of supports.
ParamSet merge_params(const ParamSet& base, std::span<const SparseDelta> deltas, std::span<const double> weights);

struct MergedPrediction {
    int label = 0;
    TaskWeights weights;
};

MergedPrediction merged_predict(const MlpSpec& spec, const ParamSet& base, std::span<const SparseDelta> deltas,
                                const ReferenceIndex& index, std::size_t neighbors, std::span<const double> x);

double merged_accuracy(const MlpSpec& spec, const ParamSet& base, std::span<const SparseDelta> deltas,
                       const ReferenceIndex& index, std::size_t neighbors, const Dataset& data);

// "TSWI" index file: header with task count, E, e, r and ids, then centres and projection as
// little-endian float32.
void save_index(const std::filesystem::path& path, const ReferenceIndex& index);
ReferenceIndex load_index(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_index(const ReferenceIndex& index);
ReferenceIndex parse_index(std::span<const std::uint8_t> bytes);

}  // namespace tsw
