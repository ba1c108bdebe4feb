#ifndef TOPICTREND_ANALYZE_HPP
#define TOPICTREND_ANALYZE_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "topictrend/cluster.hpp"
#include "topictrend/common.hpp"
#include "topictrend/corpus.hpp"
#include "topictrend/text.hpp"

namespace topictrend {

// ---------------------------------------------------------------------------
// Cluster summaries for human naming

struct ClusterSummary {
    std::size_t label = 0;
    std::size_t size = 0;
    std::vector<std::pair<std::string, double>> top_tokens;      // summed TF-IDF weight, descending
    std::vector<std::pair<std::string, double>> nearest_documents;  // (record_id, distance to centroid)
};

/// Per cluster: the 10 tokens with the largest TF-IDF weight summed over the
/// members (ties in lexicographic order) and the 10 members closest to the
/// centroid (ties by record id), counting identical abstracts once.
/// All spans are aligned with the model's assignment order.
inline std::vector<ClusterSummary> cluster_summary(const ClusterModel& model, const TfIdfModel& tfidf,
                                                   std::span<const DocumentTermWeights> weights,
                                                   const Matrix& embeddings, std::span<const GrantRecord> records,
                                                   std::size_t top_n = 10) {
    const std::size_t n = model.assignments.size();
    if (weights.size() != n || embeddings.rows() != n || records.size() != n)
        throw ArgumentError("cluster_summary: inputs not aligned with the model");

    std::vector<std::map<std::size_t, double>> scores(model.k);
    std::vector<std::vector<std::size_t>> members(model.k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = model.assignments[i];
        members[c].push_back(i);
        for (const auto& [t, w] : weights[i].entries) scores[c][t] += w;
    }

    std::vector<ClusterSummary> out(model.k);
    parallel_for(model.k, [&](std::size_t c) {
        auto& s = out[c];
        s.label = c;
        s.size = members[c].size();

        std::vector<std::pair<std::size_t, double>> ranked(scores[c].begin(), scores[c].end());
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        for (std::size_t r = 0; r < std::min(top_n, ranked.size()); ++r)
            s.top_tokens.emplace_back(tfidf.tokens[ranked[r].first], ranked[r].second);

        std::vector<std::pair<double, std::size_t>> by_distance;
        for (auto i : members[c])
            by_distance.emplace_back(euclidean_distance(embeddings.row(i), model.centroids.row(c)), i);
        std::sort(by_distance.begin(), by_distance.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return records[a.second].record_id < records[b.second].record_id;
        });
        std::unordered_set<std::string_view> seen_abstracts;
        for (const auto& [d, i] : by_distance) {
            if (s.nearest_documents.size() == top_n) break;
            if (!seen_abstracts.insert(records[i].abstract).second) continue;
            s.nearest_documents.emplace_back(records[i].record_id, d);
        }
    });
    return out;
}

inline nlohmann::ordered_json to_json(const std::vector<ClusterSummary>& summaries,
                                      std::span<const GrantRecord> records = {}) {
    std::map<std::string_view, const GrantRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.record_id, &r);
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : summaries) {
        nlohmann::ordered_json j;
        j["label"] = s.label;
        j["size"] = s.size;
        auto& toks = j["top_tokens"] = nlohmann::ordered_json::array();
        for (const auto& [t, w] : s.top_tokens) toks.push_back({{"token", t}, {"score", w}});
        auto& docs = j["nearest_documents"] = nlohmann::ordered_json::array();
        for (const auto& [id, d] : s.nearest_documents) {
            nlohmann::ordered_json e{{"record_id", id}, {"distance", d}};
            if (auto it = by_id.find(id); it != by_id.end()) e["title"] = it->second->title;
            docs.push_back(std::move(e));
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

inline std::vector<ClusterSummary> summaries_from_json(const nlohmann::json& arr) {
    std::vector<ClusterSummary> out;
    try {
        for (const auto& j : arr) {
            ClusterSummary s;
            s.label = j.at("label").get<std::size_t>();
            s.size = j.at("size").get<std::size_t>();
            for (const auto& t : j.at("top_tokens"))
                s.top_tokens.emplace_back(t.at("token").get<std::string>(), t.at("score").get<double>());
            for (const auto& d : j.at("nearest_documents"))
                s.nearest_documents.emplace_back(d.at("record_id").get<std::string>(), d.at("distance").get<double>());
            out.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed summaries: ") + e.what());
    }
    return out;
}

/// Member count per label.
inline std::vector<std::size_t> cluster_sizes(const ClusterModel& model) {
    std::vector<std::size_t> counts(model.k, 0);
    for (auto l : model.assignments) ++counts.at(l);
    return counts;
}

// ---------------------------------------------------------------------------
// Topic names (analyst-edited `label,name` CSV)

using TopicNameMap = std::map<std::size_t, std::string>;

inline TopicNameMap read_topic_names(std::istream& in, std::size_t k) {
    const auto rows = read_csv(in);
    if (rows.empty()) throw SchemaError("empty topic-name file: missing header");
    static constexpr std::string_view cols[] = {"label", "name"};
    const auto idx = require_columns(rows.front(), cols);
    TopicNameMap names;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        if (f.size() != rows.front().fields.size()) throw ParseError(rows[r].line, "wrong field count");
        auto label = parse_number<std::size_t>(f[idx[0]]);
        if (!label || *label >= k) throw ParseError(rows[r].line, "label '" + f[idx[0]] + "' not in [0, k)");
        const auto name = std::string(trim(f[idx[1]]));
        if (name.empty()) throw ParseError(rows[r].line, "empty topic name");
        names[*label] = name;
    }
    return names;
}

inline void write_topic_names(std::ostream& out, const TopicNameMap& names) {
    out << "label,name\n";
    for (const auto& [label, name] : names) out << label << ',' << csv_escape(name) << '\n';
}

/// Template for analysts: the name column is prefilled with the top tokens.
inline TopicNameMap naming_template(const std::vector<ClusterSummary>& summaries, std::size_t tokens = 5) {
    TopicNameMap names;
    for (const auto& s : summaries) {
        std::string name;
        for (std::size_t i = 0; i < std::min(tokens, s.top_tokens.size()); ++i)
            name += (i ? " " : "") + s.top_tokens[i].first;
        names[s.label] = name.empty() ? "cluster " + std::to_string(s.label) : name;
    }
    return names;
}

inline std::string topic_name(const TopicNameMap& names, std::size_t label) {
    auto it = names.find(label);
    return it != names.end() ? it->second : std::to_string(label);
}

// ---------------------------------------------------------------------------
// Funding trends

struct YearRange {
    int start = 2000;
    int end = 2020;

    std::size_t size() const { return static_cast<std::size_t>(end - start + 1); }
};

/// Dollars per (cluster, fiscal year), zero-filled over the range.
inline std::vector<std::vector<std::int64_t>> annual_totals(std::span<const GrantRecord> records,
                                                            std::span<const std::size_t> assignments, std::size_t k,
                                                            YearRange range) {
    if (records.size() != assignments.size()) throw ArgumentError("annual_totals: assignments do not cover corpus");
    if (range.start > range.end) throw ArgumentError("annual_totals: empty year range");
    std::vector<std::vector<std::int64_t>> totals(k, std::vector<std::int64_t>(range.size(), 0));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const int y = records[i].fiscal_year;
        if (y < range.start || y > range.end)
            throw ArgumentError("record '" + records[i].record_id + "' lies outside the year range");
        totals.at(assignments[i])[static_cast<std::size_t>(y - range.start)] += records[i].amount;
    }
    return totals;
}

struct Growth {
    double ols_slope = 0.0;        // dollars per year
    std::int64_t endpoint_delta = 0;
};

/// Least-squares slope of dollars against year and last-minus-first change.
inline Growth growth_rate(std::span<const std::int64_t> series) {
    if (series.size() < 2) throw ArgumentError("growth_rate: need at least two years");
    const auto n = static_cast<double>(series.size());
    const double x_mean = (n - 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double dx = static_cast<double>(i) - x_mean;
        sxy += dx * static_cast<double>(series[i]);
        sxx += dx * dx;
    }
    return {sxy / sxx, series.back() - series.front()};
}

struct TrendReport {
    std::size_t label = 0;
    std::string name;
    std::vector<std::int64_t> annual_totals;
    double ols_slope = 0.0;
    std::int64_t endpoint_delta = 0;
    bool endpoint_zero_filled = false;  // first or last year had no awards
    std::size_t rank = 0;               // 1 = largest increase
    std::optional<int> first_funded_year;
    std::optional<int> last_funded_year;
    bool emerged = false;
    bool extinct = false;

    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto v : annual_totals) s += v;
        return s;
    }
};

/// Ranks by descending slope, ties to the lower label. Returns the reports in
/// rank order together with the mean slope over all topics.
struct RankedTopics {
    std::vector<TrendReport> reports;
    double mean_slope = 0.0;
};

inline RankedTopics rank_topics(std::vector<TrendReport> reports) {
    std::sort(reports.begin(), reports.end(), [](const TrendReport& a, const TrendReport& b) {
        if (a.ols_slope != b.ols_slope) return a.ols_slope > b.ols_slope;
        return a.label < b.label;
    });
    RankedTopics out;
    double sum = 0.0;
    for (std::size_t r = 0; r < reports.size(); ++r) {
        reports[r].rank = r + 1;
        sum += reports[r].ols_slope;
    }
    out.mean_slope = reports.empty() ? 0.0 : sum / static_cast<double>(reports.size());
    out.reports = std::move(reports);
    return out;
}

/// Fills first/last funded year and the emerged / extinct flags.
inline void emergence_extinction(std::vector<TrendReport>& reports, YearRange range) {
    for (auto& r : reports) {
        r.first_funded_year.reset();
        r.last_funded_year.reset();
        for (std::size_t y = 0; y < r.annual_totals.size(); ++y) {
            if (r.annual_totals[y] == 0) continue;
            const int year = range.start + static_cast<int>(y);
            if (!r.first_funded_year) r.first_funded_year = year;
            r.last_funded_year = year;
        }
        r.emerged = r.first_funded_year && *r.first_funded_year > range.start;
        r.extinct = r.last_funded_year && *r.last_funded_year < range.end;
    }
}

/// Full per-topic trend table in rank order.
inline RankedTopics build_trend_reports(std::span<const GrantRecord> records, std::span<const std::size_t> assignments,
                                        std::size_t k, YearRange range, const TopicNameMap& names = {}) {
    if (range.size() < 2) throw ArgumentError("trend analysis needs at least two years");
    auto totals = annual_totals(records, assignments, k, range);
    std::vector<TrendReport> reports(k);
    for (std::size_t c = 0; c < k; ++c) {
        auto& r = reports[c];
        r.label = c;
        r.name = topic_name(names, c);
        r.annual_totals = std::move(totals[c]);
        const auto g = growth_rate(r.annual_totals);
        r.ols_slope = g.ols_slope;
        r.endpoint_delta = g.endpoint_delta;
        r.endpoint_zero_filled = r.annual_totals.front() == 0 || r.annual_totals.back() == 0;
    }
    emergence_extinction(reports, range);
    return rank_topics(std::move(reports));
}

inline void write_trends_csv(std::ostream& out, const RankedTopics& ranked, YearRange range) {
    out << "label,name,slope,endpoint_delta,rank,first_year,last_year";
    for (int y = range.start; y <= range.end; ++y) out << ",total_" << y;
    out << ",emerged,extinct,endpoint_zero_filled\n";
    auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
    for (const auto& r : ranked.reports) {
        out << r.label << ',' << csv_escape(r.name) << ',' << format_double(r.ols_slope) << ',' << r.endpoint_delta
            << ',' << r.rank << ',' << opt(r.first_funded_year) << ',' << opt(r.last_funded_year);
        for (auto v : r.annual_totals) out << ',' << v;
        out << ',' << (r.emerged ? 1 : 0) << ',' << (r.extinct ? 1 : 0) << ',' << (r.endpoint_zero_filled ? 1 : 0)
            << '\n';
    }
}

// ---------------------------------------------------------------------------
// Growth by region of the 2-D projection

/// Which semantic label each half-plane carries (after mean-centering).
struct AxisConfig {
    std::string x_positive = "therapeutics";
    std::string x_negative = "diagnostics";
    std::string y_positive = "biology";
    std::string y_negative = "physics";
};

enum class QuadrantMode { cluster, grant };

struct RegionGrowth {
    std::string name;
    std::vector<std::size_t> clusters;  // labels with members in the region
    std::size_t members = 0;            // clusters (cluster mode) or grants (grant mode)
    std::optional<double> mean_growth;  // nullopt when the region is empty
};

struct QuadrantReport {
    QuadrantMode mode = QuadrantMode::cluster;
    std::vector<RegionGrowth> quadrants;    // (+x,+y), (-x,+y), (+x,-y), (-x,-y)
    std::vector<RegionGrowth> half_planes;  // +y, -y, +x, -x
    std::vector<std::string> warnings;
};

/// Splits the projection into quadrants by the sign of mean-centred
/// coordinates (zero counts as positive, with a warning) and averages the
/// topic slopes per region. Cluster mode places each cluster's 2-D centroid;
/// grant mode places each grant and averages its cluster's slope.
/// `slopes[label]` is the topic's OLS slope.
inline QuadrantReport quadrant_growth(const Matrix& projection, std::span<const std::size_t> assignments,
                                      std::size_t k, std::span<const double> slopes, const AxisConfig& axes,
                                      QuadrantMode mode = QuadrantMode::cluster) {
    if (projection.cols() != 2 || projection.rows() != assignments.size())
        throw ArgumentError("quadrant_growth: projection not aligned with assignments");
    if (slopes.size() != k) throw ArgumentError("quadrant_growth: one slope per cluster required");

    // Points to place: (x, y, cluster label).
    struct Point {
        double x, y;
        std::size_t label;
    };
    std::vector<Point> pts;
    if (mode == QuadrantMode::cluster) {
        std::vector<double> sx(k, 0.0), sy(k, 0.0);
        std::vector<std::size_t> cnt(k, 0);
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            sx[assignments[i]] += projection(i, 0);
            sy[assignments[i]] += projection(i, 1);
            ++cnt[assignments[i]];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (cnt[c] > 0) pts.push_back({sx[c] / static_cast<double>(cnt[c]), sy[c] / static_cast<double>(cnt[c]), c});
    } else {
        for (std::size_t i = 0; i < assignments.size(); ++i)
            pts.push_back({projection(i, 0), projection(i, 1), assignments[i]});
    }
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());

    QuadrantReport rep;
    rep.mode = mode;
    const std::string quadrant_names[4] = {axes.y_positive + "-" + axes.x_positive, axes.y_positive + "-" + axes.x_negative,
                                           axes.y_negative + "-" + axes.x_positive, axes.y_negative + "-" + axes.x_negative};
    const std::string half_names[4] = {axes.y_positive, axes.y_negative, axes.x_positive, axes.x_negative};
    std::vector<std::vector<const Point*>> q(4), h(4);
    for (const auto& p : pts) {
        const double cx = p.x - mx, cy = p.y - my;
        if (cx == 0.0 || cy == 0.0) {
            const std::string what = mode == QuadrantMode::cluster ? "cluster " + std::to_string(p.label)
                                                                   : "a grant of cluster " + std::to_string(p.label);
            rep.warnings.push_back(what + " lies on an axis; assigned to the positive side");
        }
        const bool xp = cx >= 0.0, yp = cy >= 0.0;
        q[(yp ? 0 : 2) + (xp ? 0 : 1)].push_back(&p);
        h[yp ? 0 : 1].push_back(&p);
        h[xp ? 2 : 3].push_back(&p);
    }
    auto region = [&](const std::string& name, const std::vector<const Point*>& members) {
        RegionGrowth r;
        r.name = name;
        r.members = members.size();
        double sum = 0.0;
        std::vector<std::size_t> labels;
        for (const auto* p : members) {
            sum += slopes[p->label];
            labels.push_back(p->label);
        }
        std::sort(labels.begin(), labels.end());
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        r.clusters = std::move(labels);
        if (!members.empty()) r.mean_growth = sum / static_cast<double>(members.size());
        return r;
    };
    for (int i = 0; i < 4; ++i) rep.quadrants.push_back(region(quadrant_names[i], q[i]));
    for (int i = 0; i < 4; ++i) rep.half_planes.push_back(region(half_names[i], h[i]));
    return rep;
}

inline nlohmann::ordered_json to_json(const QuadrantReport& rep) {
    auto regions = [](const std::vector<RegionGrowth>& rs) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& r : rs) {
            nlohmann::ordered_json j;
            j["region"] = r.name;
            j["clusters"] = r.clusters;
            j["members"] = r.members;
            j["mean_growth"] = r.mean_growth ? nlohmann::ordered_json(*r.mean_growth) : nlohmann::ordered_json();
            arr.push_back(std::move(j));
        }
        return arr;
    };
    nlohmann::ordered_json j;
    j["mode"] = rep.mode == QuadrantMode::cluster ? "cluster" : "grant";
    j["quadrants"] = regions(rep.quadrants);
    j["half_planes"] = regions(rep.half_planes);
    j["warnings"] = rep.warnings;
    return j;
}

}  // namespace topictrend

#endif  // TOPICTREND_ANALYZE_HPP
