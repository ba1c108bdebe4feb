#ifndef TOPICTREND_TESTS_SUPPORT_HPP
#define TOPICTREND_TESTS_SUPPORT_HPP

// Independent reference implementations used as oracles by the unit and
// acceptance tests. None of these call into the library's algorithms.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "topictrend/common.hpp"
#include "topictrend/corpus.hpp"

namespace tt_test {

using topictrend::Matrix;

inline Matrix random_points(std::mt19937_64& rng, std::size_t n, std::size_t d, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = g(rng);
    return m;
}

inline double sq_dist(const Matrix& m, std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t c = 0; c < m.cols(); ++c) s += (m(i, c) - m(j, c)) * (m(i, c) - m(j, c));
    return s;
}

/// Relabel so labels appear in first-occurrence order; makes partitions comparable.
inline std::vector<std::size_t> canonical(const std::vector<std::size_t>& labels) {
    std::map<std::size_t, std::size_t> remap;
    std::vector<std::size_t> out;
    for (auto l : labels) {
        auto [it, fresh] = remap.try_emplace(l, remap.size());
        out.push_back(it->second);
    }
    return out;
}

/// Sum of squared deviations from the member mean.
inline double sse(const Matrix& p, const std::vector<std::size_t>& members) {
    double total = 0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
        double mean = 0;
        for (auto i : members) mean += p(i, c);
        mean /= static_cast<double>(members.size());
        for (auto i : members) total += (p(i, c) - mean) * (p(i, c) - mean);
    }
    return total;
}

/// Greedy Ward agglomeration that recomputes every pairwise SSE increase from
/// scratch at each step.
inline std::vector<std::size_t> naive_ward(const Matrix& p, std::size_t k) {
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < p.rows(); ++i) clusters.push_back({i});
    while (clusters.size() > k) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t ba = 0, bb = 0;
        for (std::size_t a = 0; a < clusters.size(); ++a)
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                auto u = clusters[a];
                u.insert(u.end(), clusters[b].begin(), clusters[b].end());
                const double cost = sse(p, u) - sse(p, clusters[a]) - sse(p, clusters[b]);
                if (cost < best) best = cost, ba = a, bb = b;
            }
        clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    }
    std::vector<std::size_t> labels(p.rows());
    for (std::size_t c = 0; c < clusters.size(); ++c)
        for (auto i : clusters[c]) labels[i] = c;
    return canonical(labels);
}

/// Direct-sum inertia against explicit centroids.
inline double direct_inertia(const Matrix& p, const Matrix& centroids, const std::vector<std::size_t>& labels) {
    double s = 0;
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t c = 0; c < p.cols(); ++c) {
            const double d = p(i, c) - centroids(labels[i], c);
            s += d * d;
        }
    return s;
}

/// Textbook O(n^2) silhouette with singleton clusters scoring 0.
inline double naive_silhouette(const Matrix& p, const std::vector<std::size_t>& labels) {
    const std::size_t n = p.rows();
    std::map<std::size_t, std::size_t> size;
    for (auto l : labels) ++size[l];
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (size[labels[i]] == 1) continue;
        std::map<std::size_t, double> sum;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sum[labels[j]] += std::sqrt(sq_dist(p, i, j));
        const double a = sum[labels[i]] / static_cast<double>(size[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (auto& [l, s] : sum)
            if (l != labels[i]) b = std::min(b, s / static_cast<double>(size[l]));
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

/// Evaluates both empirical CDFs at every pooled sample point.
inline double brute_force_ks(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    double d = 0;
    for (double x : pooled) {
        double fa = 0, fb = 0;
        for (double v : a) fa += v <= x;
        for (double v : b) fb += v <= x;
        d = std::max(d, std::abs(fa / static_cast<double>(a.size()) - fb / static_cast<double>(b.size())));
    }
    return d;
}

/// Adjusted Rand Index from the contingency table.
inline double adjusted_rand_index(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    std::map<std::size_t, double> rows, cols;
    for (std::size_t i = 0; i < x.size(); ++i) ++table[{x[i], y[i]}], ++rows[x[i]], ++cols[y[i]];
    auto c2 = [](double v) { return v * (v - 1) / 2; };
    double index = 0, sa = 0, sb = 0;
    for (auto& [key, v] : table) index += c2(v);
    for (auto& [key, v] : rows) sa += c2(v);
    for (auto& [key, v] : cols) sb += c2(v);
    const double expected = sa * sb / c2(static_cast<double>(x.size()));
    const double maximum = (sa + sb) / 2;
    return (index - expected) / (maximum - expected);
}

/// OLS slope by the textbook formula over x = 0..n-1.
inline double closed_form_slope(const std::vector<std::int64_t>& y) {
    const double n = static_cast<double>(y.size());
    double sx = 0, sy = 0, sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double xi = static_cast<double>(i), yi = static_cast<double>(y[i]);
        sx += xi, sy += yi, sxy += xi * yi, sxx += xi * xi;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Documents over `topics` disjoint vocabularies of `words` tokens each, with
/// word vectors clustered around orthogonal axes.
struct PlantedCorpus {
    std::vector<std::string> ids;
    std::vector<std::string> texts;
    std::vector<std::size_t> truth;
    std::vector<std::pair<std::string, std::vector<double>>> vectors;
};

inline std::string planted_word(std::size_t topic, std::size_t w) {
    return "topic" + std::string(1, static_cast<char>('a' + topic)) + "word" + std::string(1, static_cast<char>('a' + w / 26)) +
           std::string(1, static_cast<char>('a' + w % 26));
}

inline PlantedCorpus planted_corpus(std::uint64_t seed, std::size_t docs = 500, std::size_t topics = 5,
                                    std::size_t words = 20, std::size_t dim = 10) {
    std::mt19937_64 rng(seed);
    PlantedCorpus pc;
    std::normal_distribution<double> noise(0.0, 0.35);
    for (std::size_t t = 0; t < topics; ++t)
        for (std::size_t w = 0; w < words; ++w) {
            std::vector<double> v(dim);
            for (auto& x : v) x = noise(rng);
            v[t % dim] += 3.0;
            pc.vectors.emplace_back(planted_word(t, w), std::move(v));
        }
    std::uniform_int_distribution<std::size_t> len(30, 60), pick(0, words - 1);
    for (std::size_t d = 0; d < docs; ++d) {
        const std::size_t t = d % topics;
        std::string text;
        const std::size_t L = len(rng);
        for (std::size_t i = 0; i < L; ++i) text += planted_word(t, pick(rng)) + " ";
        char id[32];
        std::snprintf(id, sizeof id, "D%04zu", d);
        pc.ids.push_back(id);
        pc.texts.push_back(text);
        pc.truth.push_back(t);
    }
    return pc;
}

inline topictrend::GrantRecord make_record(std::string id, std::string abstract, int year = 2010,
                                           std::int64_t amount = 1000, std::string institute = "CA",
                                           std::string activity = "R01") {
    topictrend::GrantRecord g;
    g.record_id = std::move(id);
    g.title = "Title " + g.record_id;
    g.abstract = std::move(abstract);
    g.fiscal_year = year;
    g.amount = amount;
    g.institute = std::move(institute);
    g.activity_code = std::move(activity);
    g.department = "HHS";
    return g;
}

}  // namespace tt_test

#endif
