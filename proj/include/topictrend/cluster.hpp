#ifndef TOPICTREND_CLUSTER_HPP
#define TOPICTREND_CLUSTER_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "topictrend/common.hpp"

namespace topictrend {

inline constexpr std::size_t kNoCluster = std::numeric_limits<std::size_t>::max();

// ---------------------------------------------------------------------------
// Ward agglomeration

/// One agglomeration step. Clusters are named by their smallest member point
/// index, so `cluster_a < cluster_b` and the merged cluster keeps `cluster_a`.
/// `merge_cost` is the increase in within-cluster sum of squares.
struct WardMerge {
    std::size_t cluster_a = 0;
    std::size_t cluster_b = 0;
    double merge_cost = 0.0;
    std::size_t size = 0;  // members of the merged cluster

    bool operator==(const WardMerge&) const = default;
};

/// The n-1 merges of a Ward dendrogram in ascending cost order.
struct WardMergeTrace {
    std::size_t n_points = 0;
    std::vector<WardMerge> merges;

    /// Flat partition with k clusters: the first n-k merges applied.
    /// Labels are numbered 0..k-1 in order of each cluster's first point.
    std::vector<std::size_t> cut(std::size_t k) const {
        if (k < 1 || k > n_points) throw ArgumentError("cut: k must lie in [1, n]");
        std::vector<std::size_t> parent(n_points);
        std::iota(parent.begin(), parent.end(), std::size_t{0});
        auto find = [&](std::size_t x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (std::size_t m = 0; m < n_points - k; ++m) {
            const auto a = find(merges[m].cluster_a), b = find(merges[m].cluster_b);
            parent[std::max(a, b)] = std::min(a, b);
        }
        std::vector<std::size_t> label_of_root(n_points, kNoCluster), labels(n_points);
        std::size_t next = 0;
        for (std::size_t i = 0; i < n_points; ++i) {
            auto& l = label_of_root[find(i)];
            if (l == kNoCluster) l = next++;
            labels[i] = l;
        }
        return labels;
    }
};

namespace detail {

class CondensedDistances {
public:
    explicit CondensedDistances(std::size_t n) : n_(n), d_(n < 2 ? 0 : n * (n - 1) / 2) {}
    double& operator()(std::size_t i, std::size_t j) { return d_[index(i, j)]; }
    double operator()(std::size_t i, std::size_t j) const { return d_[index(i, j)]; }

private:
    std::size_t index(std::size_t i, std::size_t j) const {
        if (i > j) std::swap(i, j);
        return i * n_ - i * (i + 1) / 2 + (j - i - 1);
    }
    std::size_t n_;
    std::vector<double> d_;
};

}  // namespace detail

/// Full Ward dendrogram by the nearest-neighbour-chain algorithm over a
/// condensed dissimilarity matrix, updated with the Lance-Williams formula.
/// O(n^2) memory and time. Nearest-neighbour ties go to the previous chain
/// element, then to the smallest cluster name; the final ordering sorts by
/// (cost, cluster_a, cluster_b).
inline WardMergeTrace ward_tree(const Matrix& points) {
    const std::size_t n = points.rows();
    WardMergeTrace trace;
    trace.n_points = n;
    if (n < 2) return trace;

    // Dissimilarities are squared distances; the Ward update keeps them equal
    // to twice the merge cost.
    detail::CondensedDistances dist(n);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) dist(i, j) = squared_distance(points.row(i), points.row(j));
    });

    std::vector<std::size_t> size(n, 1);
    std::vector<std::size_t> active(n);  // sorted list of live cluster names
    std::iota(active.begin(), active.end(), std::size_t{0});
    std::vector<std::size_t> chain;
    chain.reserve(n);

    while (active.size() > 1) {
        if (chain.empty()) chain.push_back(active.front());
        std::size_t x = 0, y = 0;
        while (true) {
            x = chain.back();
            const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : kNoCluster;
            double best = std::numeric_limits<double>::infinity();
            y = kNoCluster;
            for (std::size_t j : active) {
                if (j == x) continue;
                const double d = dist(x, j);
                if (d < best) {
                    best = d;
                    y = j;
                }
            }
            if (prev != kNoCluster && dist(x, prev) <= best) y = prev;
            if (y == prev) break;
            chain.push_back(y);
        }
        chain.pop_back();
        chain.pop_back();

        const std::size_t lo = std::min(x, y), hi = std::max(x, y);
        const double d_lohi = dist(lo, hi);
        const auto s_lo = static_cast<double>(size[lo]), s_hi = static_cast<double>(size[hi]);
        for (std::size_t k : active) {
            if (k == lo || k == hi) continue;
            const auto s_k = static_cast<double>(size[k]);
            dist(lo, k) = ((s_lo + s_k) * dist(lo, k) + (s_hi + s_k) * dist(hi, k) - s_k * d_lohi) /
                          (s_lo + s_hi + s_k);
        }
        size[lo] += size[hi];
        trace.merges.push_back({lo, hi, 0.5 * d_lohi, size[lo]});
        active.erase(std::lower_bound(active.begin(), active.end(), hi));
    }

    std::stable_sort(trace.merges.begin(), trace.merges.end(), [](const WardMerge& a, const WardMerge& b) {
        return std::tie(a.merge_cost, a.cluster_a, a.cluster_b) < std::tie(b.merge_cost, b.cluster_a, b.cluster_b);
    });
    return trace;
}

struct WardPartition {
    std::vector<std::size_t> labels;
    WardMergeTrace trace;
};

inline WardPartition ward_partition(const Matrix& points, std::size_t k) {
    if (k < 1 || k > points.rows())
        throw ArgumentError("ward_partition: k=" + std::to_string(k) + " must lie in [1, " +
                            std::to_string(points.rows()) + "]");
    WardPartition p;
    p.trace = ward_tree(points);
    p.labels = p.trace.cut(k);
    return p;
}

/// k x D matrix of member means. Every label in [0, k) must have a member.
inline Matrix cluster_means(const Matrix& points, std::span<const std::size_t> labels, std::size_t k) {
    Matrix means(k, points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto m = means.row(labels[i]);
        const auto x = points.row(i);
        for (std::size_t d = 0; d < x.size(); ++d) m[d] += x[d];
        ++counts[labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) throw ComputeError("cluster " + std::to_string(c) + " is empty");
        for (auto& v : means.row(c)) v /= static_cast<double>(counts[c]);
    }
    return means;
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansOptions {
    double tol = 1e-6;         // max centroid displacement
    std::size_t max_iter = 300;
};

struct ClusterModel {
    std::size_t k = 0;
    Matrix centroids;
    std::vector<std::size_t> assignments;
    double inertia = 0.0;
    std::size_t iterations_used = 0;
    bool converged = false;
    std::vector<double> inertia_trace;  // inertia after each Lloyd iteration

    bool operator==(const ClusterModel&) const = default;
};

inline double inertia(const Matrix& points, const Matrix& centroids, std::span<const std::size_t> labels) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) s += squared_distance(points.row(i), centroids.row(labels[i]));
    return s;
}

inline double inertia(const Matrix& points, const ClusterModel& model) {
    if (model.assignments.size() != points.rows()) throw ArgumentError("inertia: model does not cover all rows");
    return inertia(points, model.centroids, model.assignments);
}

inline std::size_t nearest_centroid(std::span<const double> x, const Matrix& centroids) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double d = squared_distance(x, centroids.row(c));
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

namespace detail {

inline ClusterModel lloyd(const Matrix& points, Matrix centroids, const KMeansOptions& opts) {
    const std::size_t n = points.rows(), k = centroids.rows();
    ClusterModel model;
    model.k = k;
    std::vector<std::size_t> labels(n, kNoCluster), next(n);

    for (std::size_t iter = 1; iter <= opts.max_iter; ++iter) {
        parallel_for(n, [&](std::size_t i) { next[i] = nearest_centroid(points.row(i), centroids); });

        std::vector<std::size_t> counts(k, 0);
        for (auto l : next) ++counts[l];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            // Empty cluster: take the point farthest from its centroid.
            std::size_t pick = kNoCluster;
            double far = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[next[i]] < 2) continue;
                const double d = squared_distance(points.row(i), centroids.row(next[i]));
                if (d > far) {
                    far = d;
                    pick = i;
                }
            }
            if (pick == kNoCluster) throw ComputeError("cannot repair empty cluster: fewer points than clusters");
            --counts[next[pick]];
            next[pick] = c;
            counts[c] = 1;
        }

        Matrix updated = cluster_means(points, next, k);
        double displacement = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            displacement = std::max(displacement, euclidean_distance(updated.row(c), centroids.row(c)));
        const bool changed = next != labels;
        labels = next;
        centroids = std::move(updated);
        model.inertia_trace.push_back(inertia(points, centroids, labels));
        model.iterations_used = iter;
        if (!changed || displacement < opts.tol) {
            model.converged = true;
            break;
        }
    }
    model.centroids = std::move(centroids);
    model.assignments = std::move(labels);
    model.inertia = model.inertia_trace.empty() ? 0.0 : model.inertia_trace.back();
    return model;
}

}  // namespace detail

/// Lloyd iterations from the given centroids until assignments stop changing,
/// the largest centroid move drops below tol, or max_iter is reached.
/// Nearest-centroid ties go to the lowest cluster index; a cluster left empty
/// receives the point farthest from its current centroid (lowest index on ties).
inline ClusterModel kmeans_refine(const Matrix& points, Matrix initial, const KMeansOptions& opts = {}) {
    const std::size_t k = initial.rows();
    if (k < 1 || k > points.rows()) throw ArgumentError("kmeans_refine: need 1 <= k <= n");
    if (initial.cols() != points.cols()) throw ArgumentError("kmeans_refine: centroid dimension mismatch");
    if (opts.max_iter < 1 || !(opts.tol >= 0.0)) throw ArgumentError("kmeans_refine: invalid tol/max_iter");
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
            if (squared_distance(initial.row(a), initial.row(b)) == 0.0)
                throw ArgumentError("kmeans_refine: initial centroids " + std::to_string(a) + " and " +
                                    std::to_string(b) + " coincide");
    return detail::lloyd(points, std::move(initial), opts);
}

/// Hierarchically stabilized k-means: Ward partition, member means as the
/// starting centroids, then Lloyd refinement. No randomness.
inline ClusterModel fit_hsk(const Matrix& points, std::size_t k, const KMeansOptions& opts = {}) {
    const auto ward = ward_partition(points, k);
    return kmeans_refine(points, cluster_means(points, ward.labels, k), opts);
}

/// Same as fit_hsk but reuses a precomputed dendrogram.
inline ClusterModel fit_hsk(const Matrix& points, const WardMergeTrace& tree, std::size_t k,
                            const KMeansOptions& opts = {}) {
    const auto labels = tree.cut(k);
    return kmeans_refine(points, cluster_means(points, labels, k), opts);
}

/// Best (lowest inertia, earliest on ties) of n_init Lloyd runs started from
/// k distinct random points drawn from one mt19937_64 stream.
inline ClusterModel baseline_kmeans(const Matrix& points, std::size_t k, std::size_t n_init, std::uint64_t seed,
                                    const KMeansOptions& opts = {}) {
    if (n_init < 1) throw ArgumentError("baseline_kmeans: n_init must be >= 1");
    if (k < 1 || k > points.rows()) throw ArgumentError("baseline_kmeans: need 1 <= k <= n");
    std::mt19937_64 rng(seed);
    ClusterModel best;
    for (std::size_t run = 0; run < n_init; ++run) {
        const auto picks = sample_without_replacement(rng, points.rows(), k);
        Matrix init(k, points.cols());
        for (std::size_t c = 0; c < k; ++c) std::copy_n(points.row(picks[c]).begin(), points.cols(), init.row(c).begin());
        auto model = detail::lloyd(points, std::move(init), opts);
        if (run == 0 || model.inertia < best.inertia) best = std::move(model);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Quality

/// Mean silhouette. Singleton clusters contribute 0.
inline double silhouette_score(const Matrix& points, std::span<const std::size_t> labels) {
    const std::size_t n = points.rows();
    if (labels.size() != n) throw ArgumentError("silhouette_score: label count differs from row count");
    std::size_t k = 0;
    for (auto l : labels) k = std::max(k, l + 1);
    std::vector<std::size_t> counts(k, 0);
    for (auto l : labels) ++counts[l];
    const auto populated = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
    if (populated < 2) throw ComputeError("silhouette undefined for fewer than 2 clusters");

    std::vector<double> s(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        if (counts[labels[i]] == 1) return;
        std::vector<double> sums(k, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sums[labels[j]] += euclidean_distance(points.row(i), points.row(j));
        const double a = sums[labels[i]] / static_cast<double>(counts[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (c != labels[i] && counts[c] > 0) b = std::min(b, sums[c] / static_cast<double>(counts[c]));
        const double denom = std::max(a, b);
        s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    });
    double total = 0.0;
    for (double v : s) total += v;
    return total / static_cast<double>(n);
}

struct QualityPoint {
    std::size_t k = 0;
    double inertia = 0.0;       // refined model
    double silhouette = 0.0;    // refined model
    double ward_inertia = 0.0;  // Ward partition before refinement
};

using ClusterQuality = std::vector<QualityPoint>;

/// fit_hsk for every k in [k_min, k_max], sharing one dendrogram.
inline ClusterQuality sweep_k(const Matrix& points, std::size_t k_min, std::size_t k_max,
                              const KMeansOptions& opts = {}) {
    if (k_min < 2 || k_max < k_min || k_max > points.rows())
        throw ArgumentError("sweep_k: range must lie within [2, n]");
    const auto tree = ward_tree(points);
    ClusterQuality out;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        const auto labels = tree.cut(k);
        const auto init = cluster_means(points, labels, k);
        QualityPoint q;
        q.k = k;
        q.ward_inertia = inertia(points, init, labels);
        const auto model = kmeans_refine(points, init, opts);
        q.inertia = model.inertia;
        q.silhouette = silhouette_score(points, model.assignments);
        out.push_back(q);
    }
    return out;
}

inline void write_sweep_csv(std::ostream& out, const ClusterQuality& q) {
    out << "k,inertia,silhouette\n";
    for (const auto& p : q) out << p.k << ',' << format_double(p.inertia) << ',' << format_double(p.silhouette) << '\n';
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const ClusterModel& m, std::span<const std::string> ids) {
    if (ids.size() != m.assignments.size()) throw ArgumentError("to_json: ids do not match assignments");
    nlohmann::ordered_json j;
    j["k"] = m.k;
    j["inertia"] = m.inertia;
    j["iterations_used"] = m.iterations_used;
    j["converged"] = m.converged;
    auto& c = j["centroids"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < m.centroids.rows(); ++r) {
        auto row = m.centroids.row(r);
        c.push_back(std::vector<double>(row.begin(), row.end()));
    }
    auto& a = j["assignments"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < ids.size(); ++i) a.push_back({{"record_id", ids[i]}, {"label", m.assignments[i]}});
    return j;
}

struct LoadedClusterModel {
    ClusterModel model;
    std::vector<std::string> ids;
};

inline LoadedClusterModel cluster_model_from_json(const nlohmann::json& j) {
    LoadedClusterModel out;
    auto& m = out.model;
    try {
        m.k = j.at("k").get<std::size_t>();
        m.inertia = j.at("inertia").get<double>();
        m.iterations_used = j.at("iterations_used").get<std::size_t>();
        m.converged = j.at("converged").get<bool>();
        const auto rows = j.at("centroids").get<std::vector<std::vector<double>>>();
        m.centroids = Matrix::from_rows(rows);
        for (const auto& e : j.at("assignments")) {
            out.ids.push_back(e.at("record_id").get<std::string>());
            m.assignments.push_back(e.at("label").get<std::size_t>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed cluster model: ") + e.what());
    }
    if (m.centroids.rows() != m.k) throw SchemaError("cluster model: centroid count differs from k");
    for (auto l : m.assignments)
        if (l >= m.k) throw SchemaError("cluster model: label out of range");
    return out;
}

}  // namespace topictrend

#endif  // TOPICTREND_CLUSTER_HPP
