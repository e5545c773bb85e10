#include "tsw/merge.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tsw/autodiff.hpp"
#include "tsw/container.hpp"
#include "tsw/error.hpp"
#include "tsw/rng.hpp"

namespace tsw {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// C smallest of dist (ties to the lower index).
std::vector<std::size_t> smallest(std::span<const double> dist, std::size_t count) {
    std::vector<std::size_t> idx(dist.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto less = [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), less);
    idx.resize(count);
    return idx;
}

}  // namespace

QuerySet build_query_set(const MlpSpec& spec, const ParamSet& base, const Dataset& exemplars,
                         const std::string& task_id) {
    spec.check(base);
    QuerySet q;
    q.task_id = task_id;
    q.dim = spec.feature_dim();
    const auto spans = module_spans(base);
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        const auto r = forward<double>(spec, spans, exemplars.input(i));
        q.features.insert(q.features.end(), r.features.begin(), r.features.end());
    }
    return q;
}

KMeansResult kmeans(std::span<const double> points, std::size_t dim, std::size_t clusters, std::uint64_t seed,
                    int max_iterations) {
    if (dim == 0 || points.size() % dim != 0) {
        throw StructuralError("point buffer is not a whole number of rows");
    }
    const std::size_t n = points.size() / dim;
    if (clusters == 0 || clusters > n) {
        throw DomainError("cannot form " + std::to_string(clusters) + " clusters from " + std::to_string(n) +
                          " points");
    }
    auto row = [&](std::size_t i) { return points.subspan(i * dim, dim); };
    KMeansResult r;
    r.centroids.reserve(clusters * dim);
    auto rng = make_rng(seed, "kmeans");
    std::size_t first = static_cast<std::size_t>(rng() % n);
    r.centroids.insert(r.centroids.end(), row(first).begin(), row(first).end());
    std::vector<double> closest(n);
    for (std::size_t i = 0; i < n; ++i) {
        closest[i] = squared_distance(row(i), row(first));
    }
    for (std::size_t c = 1; c < clusters; ++c) {
        const auto far = static_cast<std::size_t>(std::ranges::max_element(closest) - closest.begin());
        r.centroids.insert(r.centroids.end(), row(far).begin(), row(far).end());
        const auto centre = std::span<const double>(r.centroids).subspan(c * dim, dim);
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], squared_distance(row(i), centre));
        }
    }
    auto centre = [&](std::size_t c) { return std::span<double>(r.centroids).subspan(c * dim, dim); };
    r.assignment.assign(n, clusters);
    for (int it = 0; it < max_iterations; ++it) {
        bool changed = false;
        double objective = 0.0;
        std::vector<double> dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < clusters; ++c) {
                const double d = squared_distance(row(i), centre(c));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            changed |= r.assignment[i] != best;
            r.assignment[i] = best;
            dist[i] = best_d;
            objective += best_d;
        }
        r.objective.push_back(objective);
        r.iterations = it + 1;
        if (!changed) {
            break;
        }
        std::vector<std::size_t> counts(clusters, 0);
        std::vector<double> sums(clusters * dim, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[r.assignment[i]];
            for (std::size_t j = 0; j < dim; ++j) {
                sums[r.assignment[i] * dim + j] += row(i)[j];
            }
        }
        for (std::size_t c = 0; c < clusters; ++c) {
            auto ctr = centre(c);
            if (counts[c] == 0) {
                const auto far = static_cast<std::size_t>(std::ranges::max_element(dist) - dist.begin());
                std::ranges::copy(row(far), ctr.begin());
                dist[far] = 0.0;
                continue;
            }
            for (std::size_t j = 0; j < dim; ++j) {
                ctr[j] = sums[c * dim + j] / static_cast<double>(counts[c]);
            }
        }
    }
    return r;
}

std::vector<double> Projection::apply(std::span<const double> x) const {
    if (is_identity()) {
        return {x.begin(), x.end()};
    }
    if (x.size() != dim) {
        throw StructuralError("projection expects " + std::to_string(dim) + " features, got " +
                              std::to_string(x.size()));
    }
    std::vector<double> out(rank, 0.0);
    for (std::size_t i = 0; i < rank; ++i) {
        out[i] = ad::dot(std::span<const double>(matrix).subspan(i * dim, dim), x);
    }
    return out;
}

Projection Projection::gaussian(std::size_t rank, std::size_t dim, std::uint64_t seed) {
    if (rank == 0 || dim == 0) {
        throw DomainError("projection needs positive rank and dimension");
    }
    Projection p{rank, dim, std::vector<double>(rank * dim)};
    auto rng = make_rng(seed, "metric-init");
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    for (double& v : p.matrix) {
        v = normal(rng);
    }
    return p;
}

double metric_distance(std::span<const double> a, std::span<const double> b, const Projection& L) {
    if (a.size() != b.size()) {
        throw StructuralError("features differ in dimension");
    }
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        d[i] = a[i] - b[i];
    }
    const auto p = L.apply(d);
    return std::sqrt(ad::dot(std::span<const double>(p), std::span<const double>(p)));
}

ReferenceIndex raw_index(std::span<const QuerySet> queries) {
    if (queries.empty()) {
        throw DomainError("no query sets");
    }
    ReferenceIndex idx;
    idx.dim = queries.front().dim;
    idx.per_task = queries.front().size();
    for (const auto& q : queries) {
        if (q.dim != idx.dim || q.size() != idx.per_task) {
            throw StructuralError("query set '" + q.task_id + "' differs in size or feature dimension");
        }
        idx.task_ids.push_back(q.task_id);
        idx.points.insert(idx.points.end(), q.features.begin(), q.features.end());
    }
    if (idx.per_task == 0) {
        throw DomainError("each task needs at least one reference");
    }
    return idx;
}

ReferenceIndex center_index(std::span<const QuerySet> queries, std::size_t centers, std::uint64_t seed) {
    if (queries.empty()) {
        throw DomainError("no query sets");
    }
    ReferenceIndex idx;
    idx.dim = queries.front().dim;
    idx.per_task = centers;
    for (std::size_t k = 0; k < queries.size(); ++k) {
        const auto& q = queries[k];
        if (q.dim != idx.dim) {
            throw StructuralError("query set '" + q.task_id + "' differs in feature dimension");
        }
        const auto km = kmeans(q.features, q.dim, centers, derive_seed(seed, "centers", k));
        idx.task_ids.push_back(q.task_id);
        idx.points.insert(idx.points.end(), km.centroids.begin(), km.centroids.end());
    }
    return idx;
}

std::vector<std::size_t> nearest_references(std::span<const double> feature, const ReferenceIndex& index,
                                            std::size_t neighbors) {
    if (neighbors == 0 || neighbors > index.size()) {
        throw DomainError("neighbour count must lie in [1, " + std::to_string(index.size()) + "]");
    }
    if (feature.size() != index.dim) {
        throw StructuralError("feature has dimension " + std::to_string(feature.size()) + ", index has " +
                              std::to_string(index.dim));
    }
    const auto& L = index.projection;
    const auto fx = L.apply(feature);
    std::vector<double> dist(index.size());
    if (L.is_identity()) {
        for (std::size_t r = 0; r < index.size(); ++r) {
            dist[r] = squared_distance(fx, index.point(r));
        }
    } else {
        for (std::size_t r = 0; r < index.size(); ++r) {
            dist[r] = squared_distance(fx, L.apply(index.point(r)));
        }
    }
    return smallest(dist, neighbors);
}

std::vector<double> TaskWeights::values() const {
    std::vector<double> v(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        v[k] = (*this)[k];
    }
    return v;
}

TaskWeights knn_weights(std::span<const double> feature, const ReferenceIndex& index, std::size_t neighbors) {
    TaskWeights w;
    w.neighbors = neighbors;
    w.counts.assign(index.tasks(), 0);
    for (auto r : nearest_references(feature, index, neighbors)) {
        ++w.counts[index.label(r)];
    }
    return w;
}

LabelledFeatures LabelledFeatures::from_queries(std::span<const QuerySet> queries) {
    LabelledFeatures out;
    for (std::size_t k = 0; k < queries.size(); ++k) {
        if (out.dim == 0) {
            out.dim = queries[k].dim;
        }
        if (queries[k].dim != out.dim) {
            throw StructuralError("query sets differ in feature dimension");
        }
        out.features.insert(out.features.end(), queries[k].features.begin(), queries[k].features.end());
        out.labels.insert(out.labels.end(), queries[k].size(), k);
    }
    return out;
}

namespace {

// Loss under L as a function of generic entries; neighbours fixed by the caller.
template <class S>
S metric_objective(const LabelledFeatures& data, const ReferenceIndex& index, std::span<const S> L, std::size_t rank,
                   const std::vector<std::vector<std::size_t>>& neighbours, const MetricTrainConfig& cfg) {
    const std::size_t e = index.dim;
    auto project = [&](std::span<const double> x) {
        std::vector<S> out;
        out.reserve(rank);
        for (std::size_t i = 0; i < rank; ++i) {
            out.push_back(ad::dot(L.subspan(i * e, e), x));
        }
        return out;
    };
    std::vector<std::vector<S>> centres(index.size());
    std::vector<S> terms;
    terms.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto px = project(data.row(i));
        std::vector<S> all, same;
        for (auto z : neighbours[i]) {
            if (centres[z].empty()) {
                centres[z] = project(index.point(z));
            }
            std::vector<S> sq;
            sq.reserve(rank);
            for (std::size_t j = 0; j < rank; ++j) {
                sq.push_back(ad::square(px[j] - centres[z][j]));
            }
            const S d2 = ad::sum(std::span<const S>(sq));
            S inv = ad::value_of(d2) > cfg.distance_floor * cfg.distance_floor ? S(1.0) / ad::sqrt(d2)
                                                                                 : S(1.0 / cfg.distance_floor);
            if (index.label(z) == data.labels[i]) {
                same.push_back(inv);
            }
            all.push_back(std::move(inv));
        }
        if (same.empty()) {
            terms.push_back(S(-std::log(cfg.ratio_floor)));
            continue;
        }
        const S ratio = ad::sum(std::span<const S>(same)) / ad::sum(std::span<const S>(all));
        terms.push_back(ad::value_of(ratio) > cfg.ratio_floor ? -ad::log(ratio) : S(-std::log(cfg.ratio_floor)));
    }
    return ad::sum(std::span<const S>(terms)) / S(static_cast<double>(data.size()));
}

std::vector<std::vector<std::size_t>> all_neighbours(const LabelledFeatures& data, const ReferenceIndex& index,
                                                     std::size_t neighbors) {
    std::vector<std::vector<std::size_t>> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out[i] = nearest_references(data.row(i), index, neighbors);
    }
    return out;
}

}  // namespace

double metric_loss(const LabelledFeatures& data, const ReferenceIndex& index, const Projection& L,
                   const MetricTrainConfig& cfg) {
    ReferenceIndex with = index;
    with.projection = L;
    const auto nb = all_neighbours(data, with, cfg.neighbors);
    if (L.is_identity()) {
        std::vector<double> eye(index.dim * index.dim, 0.0);
        for (std::size_t i = 0; i < index.dim; ++i) {
            eye[i * index.dim + i] = 1.0;
        }
        return metric_objective<double>(data, index, eye, index.dim, nb, cfg);
    }
    return metric_objective<double>(data, index, L.matrix, L.rank, nb, cfg);
}

MetricTrainResult train_metric(const LabelledFeatures& data, const ReferenceIndex& index,
                               const MetricTrainConfig& cfg) {
    if (data.dim != index.dim) {
        throw StructuralError("training features and index differ in dimension");
    }
    if (data.size() == 0) {
        throw DomainError("no training features");
    }
    MetricTrainResult out;
    ReferenceIndex work = index;
    work.projection = Projection::gaussian(cfg.rank, index.dim, cfg.seed);
    auto& L = work.projection.matrix;
    std::vector<double> m1(L.size(), 0.0), m2(L.size(), 0.0);
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto nb = all_neighbours(data, work, cfg.neighbors);
        ad::Tape tape;
        const auto vars = tape.leaves(L);
        const auto loss = metric_objective<ad::Var>(data, index, vars, cfg.rank, nb, cfg);
        out.loss.push_back(loss.value());
        const auto g = tape.backward(loss).of(vars);
        const double t = epoch + 1.0;
        for (std::size_t i = 0; i < L.size(); ++i) {
            m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
            m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
            L[i] -= cfg.lr * (m1[i] / (1.0 - std::pow(b1, t))) / (std::sqrt(m2[i] / (1.0 - std::pow(b2, t))) + eps);
        }
    }
    out.loss.push_back(metric_loss(data, index, work.projection, cfg));
    out.projection = std::move(work.projection);
    return out;
}

SparseDelta SparseDelta::from_params(const std::string& task_id, const ParamSet& delta) {
    SparseDelta s;
    s.task_id = task_id;
    for (const auto& m : delta.modules()) {
        auto& pos = s.positions.emplace_back();
        auto& val = s.values.emplace_back();
        for (std::size_t j = 0; j < m.values.size(); ++j) {
            if (m.values[j] != 0.0) {
                pos.push_back(static_cast<std::uint32_t>(j));
                val.push_back(m.values[j]);
            }
        }
    }
    return s;
}

ParamSet merge_params(const ParamSet& base, std::span<const SparseDelta> deltas, std::span<const double> weights) {
    if (deltas.size() != weights.size()) {
        throw StructuralError("one weight per task vector required");
    }
    ParamSet out = base;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        const auto& d = deltas[k];
        if (d.positions.size() != base.size()) {
            throw StructuralError("task vector '" + d.task_id + "' has " + std::to_string(d.positions.size()) +
                                  " modules, base has " + std::to_string(base.size()));
        }
        if (weights[k] == 0.0) {
            continue;
        }
        for (std::size_t l = 0; l < base.size(); ++l) {
            auto& v = out.at(l).values;
            for (std::size_t i = 0; i < d.positions[l].size(); ++i) {
                const auto p = d.positions[l][i];
                if (p >= v.size()) {
                    throw StructuralError("task vector '" + d.task_id + "' indexes past module '" + out.at(l).name +
                                          "'");
                }
                v[p] += weights[k] * d.values[l][i];
            }
        }
    }
    return out;
}

MergedPrediction merged_predict(const MlpSpec& spec, const ParamSet& base, std::span<const SparseDelta> deltas,
                                const ReferenceIndex& index, std::size_t neighbors, std::span<const double> x) {
    if (deltas.size() != index.tasks()) {
        throw StructuralError("index holds " + std::to_string(index.tasks()) + " tasks, bundle holds " +
                              std::to_string(deltas.size()));
    }
    MergedPrediction p;
    p.weights = knn_weights(features(spec, base, x), index, neighbors);
    const auto merged = merge_params(base, deltas, p.weights.values());
    p.label = predict(spec, merged, x);
    return p;
}

double merged_accuracy(const MlpSpec& spec, const ParamSet& base, std::span<const SparseDelta> deltas,
                       const ReferenceIndex& index, std::size_t neighbors, const Dataset& data) {
    if (data.size() == 0) {
        return 0.0;
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        hit += merged_predict(spec, base, deltas, index, neighbors, data.input(i)).label == data.labels[i];
    }
    return static_cast<double>(hit) / static_cast<double>(data.size());
}

namespace {

constexpr std::uint8_t kIndexMagic[4] = {'T', 'S', 'W', 'I'};
constexpr std::uint8_t kIndexVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void put_f32(std::vector<std::uint8_t>& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

struct Cursor {
    std::span<const std::uint8_t> b;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (b.size() - pos < n) {
            throw CorruptionError("truncated index", pos * 8);
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(b[pos + i]) << (8 * i);
        }
        pos += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
};

}  // namespace

std::vector<std::uint8_t> serialize_index(const ReferenceIndex& index) {
    std::vector<std::uint8_t> header;
    put_u32(header, static_cast<std::uint32_t>(index.tasks()));
    put_u32(header, static_cast<std::uint32_t>(index.per_task));
    put_u32(header, static_cast<std::uint32_t>(index.dim));
    put_u32(header, static_cast<std::uint32_t>(index.projection.rank));
    for (const auto& id : index.task_ids) {
        if (id.size() > 0xFFFF) {
            throw EncodingError("task id longer than 65535 bytes");
        }
        header.push_back(static_cast<std::uint8_t>(id.size()));
        header.push_back(static_cast<std::uint8_t>(id.size() >> 8));
        header.insert(header.end(), id.begin(), id.end());
    }
    std::vector<std::uint8_t> out(std::begin(kIndexMagic), std::end(kIndexMagic));
    out.push_back(kIndexVersion);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    for (double v : index.points) {
        put_f32(out, v);
    }
    for (double v : index.projection.matrix) {
        put_f32(out, v);
    }
    return out;
}

ReferenceIndex parse_index(std::span<const std::uint8_t> bytes) {
    Cursor c{bytes};
    c.need(5);
    if (!std::equal(std::begin(kIndexMagic), std::end(kIndexMagic), bytes.begin())) {
        throw CorruptionError("bad index magic", 0);
    }
    c.pos = 4;
    if (bytes[c.pos++] != kIndexVersion) {
        throw CorruptionError("unsupported index version", 32);
    }
    const std::uint32_t header_len = c.u32();
    c.need(header_len);
    const std::size_t header_end = c.pos + header_len;
    ReferenceIndex idx;
    const std::uint32_t tasks = c.u32();
    idx.per_task = c.u32();
    idx.dim = c.u32();
    idx.projection.rank = c.u32();
    idx.projection.dim = idx.projection.rank == 0 ? 0 : idx.dim;
    for (std::uint32_t k = 0; k < tasks; ++k) {
        c.need(2);
        const std::size_t len = bytes[c.pos] | (bytes[c.pos + 1] << 8);
        c.pos += 2;
        c.need(len);
        idx.task_ids.emplace_back(reinterpret_cast<const char*>(bytes.data() + c.pos), len);
        c.pos += len;
    }
    if (c.pos != header_end) {
        throw CorruptionError("index header length mismatch", c.pos * 8);
    }
    const std::size_t n_points = static_cast<std::size_t>(tasks) * idx.per_task * idx.dim;
    const std::size_t n_proj = idx.projection.rank * idx.dim;
    c.need((n_points + n_proj) * 4);
    for (std::size_t i = 0; i < n_points; ++i) {
        idx.points.push_back(c.f32());
    }
    for (std::size_t i = 0; i < n_proj; ++i) {
        idx.projection.matrix.push_back(c.f32());
    }
    if (c.pos != bytes.size()) {
        throw CorruptionError("trailing bytes after index", c.pos * 8);
    }
    for (double v : idx.points) {
        if (!std::isfinite(v)) {
            throw CorruptionError("non-finite centroid", 0);
        }
    }
    return idx;
}

void save_index(const std::filesystem::path& path, const ReferenceIndex& index) {
    write_file(path, serialize_index(index));
}

ReferenceIndex load_index(const std::filesystem::path& path) { return parse_index(read_file(path)); }

}  // namespace tsw
