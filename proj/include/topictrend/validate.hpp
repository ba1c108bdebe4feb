#ifndef TOPICTREND_VALIDATE_HPP
#define TOPICTREND_VALIDATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "topictrend/analyze.hpp"
#include "topictrend/cluster.hpp"
#include "topictrend/common.hpp"
#include "topictrend/corpus.hpp"

namespace topictrend {

inline constexpr std::size_t kQuizOptions = 5;

// ---------------------------------------------------------------------------
// Agreement statistics

/// Cohen's kappa between two nominal label sequences,
/// (p_o - p_e) / (1 - p_e), evaluated on integer counts.
inline double cohen_kappa(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.size() != b.size()) throw ArgumentError("cohen_kappa: sequences differ in length");
    if (a.empty()) throw ArgumentError("cohen_kappa: empty sequences");
    std::map<std::size_t, std::pair<std::int64_t, std::int64_t>> marginals;
    std::int64_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++marginals[a[i]].first;
        ++marginals[b[i]].second;
        agree += a[i] == b[i];
    }
    const auto n = static_cast<std::int64_t>(a.size());
    std::int64_t chance = 0;  // N^2 * p_e
    for (const auto& [label, m] : marginals) chance += m.first * m.second;
    if (chance == n * n) throw ComputeError("kappa undefined: chance agreement is 1");
    return static_cast<double>(n * agree - chance) / static_cast<double>(n * n - chance);
}

struct KsResult {
    double statistic = 0.0;  // D
    double p_value = 1.0;
};

/// Kolmogorov limiting distribution Q(lambda) = 2 sum (-1)^(j-1) exp(-2 j^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda < 1e-3) return 1.0;
    const double a2 = -2.0 * lambda * lambda;
    double sum = 0.0, fac = 2.0, prev = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = fac * std::exp(a2 * j * j);
        sum += term;
        if (std::abs(term) <= 1e-10 * std::abs(prev) || std::abs(term) <= 1e-16 * sum)
            return std::clamp(sum, 0.0, 1.0);
        fac = -fac;
        prev = term;
    }
    return 1.0;  // series failed to converge: only happens for lambda -> 0
}

/// Two-sample KS: D = sup |F_a - F_b|, asymptotic p-value with the
/// (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) small-sample correction, ne = mn/(m+n).
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ArgumentError("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const auto m = static_cast<double>(a.size()), n = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() || j < b.size()) {
        double x;
        if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
            x = a[i];
        else
            x = b[j];
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / m - static_cast<double>(j) / n));
    }
    const double ne = m * n / (m + n);
    const double sq = std::sqrt(ne);
    return {d, kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)};
}

// ---------------------------------------------------------------------------
// Quiz generation

struct QuizOption {
    std::size_t cluster_label = 0;
    std::vector<std::string> top_tokens;

    bool operator==(const QuizOption&) const = default;
};

struct QuizItem {
    std::string quiz_id;
    std::string record_id;
    std::string title;
    std::string abstract;
    std::vector<QuizOption> options;  // kQuizOptions entries
    std::size_t answer_index = 0;     // the model's option; kept out of the form
    std::uint64_t seed = 0;

    std::size_t model_label() const { return options.at(answer_index).cluster_label; }
    bool operator==(const QuizItem&) const = default;
};

struct ReviewSlot {
    std::string quiz_id;
    std::string reviewer_id;

    bool operator==(const ReviewSlot&) const = default;
};

struct QuizParams {
    double sample_fraction = 0.05;
    std::optional<std::size_t> n_items;  // overrides sample_fraction
    std::size_t n_reviewers = 4;
    /// Share of review slots that belong to dual-reviewed items.
    double overlap_fraction = 0.25;
    bool stratified = false;
    std::uint64_t seed = 0;
};

struct QuizPlan {
    std::vector<QuizItem> items;
    std::vector<ReviewSlot> slots;
    std::size_t dual_reviewed = 0;
    std::vector<std::size_t> unvisited_clusters;  // clusters with no sampled document

    bool operator==(const QuizPlan&) const = default;
};

inline std::string reviewer_name(std::size_t r) { return "reviewer_" + std::to_string(r + 1); }

/// Builds the 5-option forced-choice quiz. Documents are drawn without
/// replacement (uniformly, or proportionally per cluster when stratified)
/// from the corpus ordered by record id, so the result depends only on the
/// seed and the set of (record id, label) pairs. Four distractors per item
/// come uniformly from the other clusters, and the options are shuffled.
/// Dual-reviewed items come first in the slot list and their two slots go to
/// consecutive reviewers in round-robin order.
inline QuizPlan generate_quiz(const ClusterModel& model, const std::vector<ClusterSummary>& summaries,
                              std::span<const GrantRecord> records, const QuizParams& params) {
    const std::size_t n = records.size();
    if (model.k < kQuizOptions) throw ArgumentError("need >=5 clusters for 5-option quiz");
    if (model.assignments.size() != n) throw ArgumentError("generate_quiz: model not aligned with corpus");
    if (summaries.size() != model.k) throw ArgumentError("generate_quiz: one summary per cluster required");
    if (params.n_reviewers < 1) throw ArgumentError("generate_quiz: need at least one reviewer");
    if (!(params.overlap_fraction >= 0.0 && params.overlap_fraction < 1.0))
        throw ArgumentError("generate_quiz: overlap_fraction must lie in [0, 1)");

    const std::size_t m = params.n_items ? *params.n_items
                                         : static_cast<std::size_t>(std::llround(params.sample_fraction * static_cast<double>(n)));
    if (m < 1) throw ArgumentError("generate_quiz: sample_fraction * n must be >= 1");
    if (m > n) throw ArgumentError("generate_quiz: more quiz items than documents");

    std::vector<std::size_t> by_id(n);
    for (std::size_t i = 0; i < n; ++i) by_id[i] = i;
    std::sort(by_id.begin(), by_id.end(),
              [&](std::size_t a, std::size_t b) { return records[a].record_id < records[b].record_id; });

    std::mt19937_64 rng(params.seed);
    std::vector<std::size_t> picked;
    if (!params.stratified) {
        for (auto s : sample_without_replacement(rng, n, m)) picked.push_back(by_id[s]);
    } else {
        std::vector<std::vector<std::size_t>> members(model.k);
        for (auto i : by_id) members[model.assignments[i]].push_back(i);
        // Largest-remainder apportionment of m over clusters.
        std::vector<std::size_t> quota(model.k);
        std::vector<std::pair<double, std::size_t>> remainder;
        std::size_t given = 0;
        for (std::size_t c = 0; c < model.k; ++c) {
            const double exact = static_cast<double>(m) * static_cast<double>(members[c].size()) / static_cast<double>(n);
            quota[c] = static_cast<std::size_t>(std::floor(exact));
            given += quota[c];
            remainder.emplace_back(exact - std::floor(exact), c);
        }
        std::stable_sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; given < m; ++r, ++given) ++quota[remainder[r].second];
        for (std::size_t c = 0; c < model.k; ++c)
            for (auto s : sample_without_replacement(rng, members[c].size(), quota[c])) picked.push_back(members[c][s]);
        shuffle_in_place(rng, picked);
    }

    QuizPlan plan;
    const int width = static_cast<int>(std::to_string(m).size());
    std::vector<bool> visited(model.k, false);
    for (std::size_t q = 0; q < picked.size(); ++q) {
        const auto& rec = records[picked[q]];
        const std::size_t label = model.assignments[picked[q]];
        visited[label] = true;

        std::vector<std::size_t> others;
        for (std::size_t c = 0; c < model.k; ++c)
            if (c != label) others.push_back(c);
        std::vector<std::size_t> labels{label};
        for (auto s : sample_without_replacement(rng, others.size(), kQuizOptions - 1)) labels.push_back(others[s]);
        shuffle_in_place(rng, labels);

        QuizItem item;
        std::string num = std::to_string(q + 1);
        item.quiz_id = "q" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
        item.record_id = rec.record_id;
        item.title = rec.title;
        item.abstract = rec.abstract;
        item.seed = params.seed;
        for (std::size_t o = 0; o < labels.size(); ++o) {
            QuizOption opt;
            opt.cluster_label = labels[o];
            for (const auto& [tok, w] : summaries[labels[o]].top_tokens) opt.top_tokens.push_back(tok);
            item.options.push_back(std::move(opt));
            if (labels[o] == label) item.answer_index = o;
        }
        plan.items.push_back(std::move(item));
    }
    for (std::size_t c = 0; c < model.k; ++c)
        if (!visited[c]) plan.unvisited_clusters.push_back(c);

    const double ov = params.overlap_fraction;
    std::size_t dual = static_cast<std::size_t>(std::llround(ov * static_cast<double>(m) / (1.0 - ov)));
    dual = std::min(dual, m);
    if (dual > 0 && params.n_reviewers < 2) throw ArgumentError("generate_quiz: overlap needs at least two reviewers");
    plan.dual_reviewed = dual;
    std::size_t slot = 0;
    for (std::size_t q = 0; q < m; ++q) {
        const std::size_t copies = q < dual ? 2 : 1;
        for (std::size_t c = 0; c < copies; ++c, ++slot)
            plan.slots.push_back({plan.items[q].quiz_id, reviewer_name(slot % params.n_reviewers)});
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Quiz files

/// One item per line, without the answer index.
inline void write_quiz_jsonl(std::ostream& out, const QuizPlan& plan) {
    for (const auto& item : plan.items) {
        nlohmann::ordered_json j;
        j["quiz_id"] = item.quiz_id;
        j["record_id"] = item.record_id;
        j["title"] = item.title;
        j["abstract"] = item.abstract;
        auto& opts = j["options"] = nlohmann::ordered_json::array();
        for (const auto& o : item.options) opts.push_back({{"cluster_label", o.cluster_label}, {"top_tokens", o.top_tokens}});
        j["seed"] = item.seed;
        out << j.dump() << '\n';
    }
}

inline void write_quiz_key_csv(std::ostream& out, const QuizPlan& plan) {
    out << "quiz_id,record_id,answer_index,cluster_label\n";
    for (const auto& item : plan.items)
        out << item.quiz_id << ',' << csv_escape(item.record_id) << ',' << item.answer_index << ','
            << item.model_label() << '\n';
}

inline void write_quiz_plan_csv(std::ostream& out, const QuizPlan& plan) {
    out << "quiz_id,reviewer_id\n";
    for (const auto& s : plan.slots) out << s.quiz_id << ',' << s.reviewer_id << '\n';
}

/// Human-readable sheet: title, abstract, then the five lettered token lists.
inline void write_quiz_sheet(std::ostream& out, const QuizPlan& plan) {
    for (const auto& item : plan.items) {
        out << "[" << item.quiz_id << "] " << item.title << "\n\n" << item.abstract << "\n\n";
        for (std::size_t o = 0; o < item.options.size(); ++o) {
            out << "  (" << o << ") ";
            for (std::size_t t = 0; t < item.options[o].top_tokens.size(); ++t)
                out << (t ? ", " : "") << item.options[o].top_tokens[t];
            out << '\n';
        }
        out << "\n----------------------------------------\n\n";
    }
}

/// Reads the JSONL form together with the answer key.
inline std::vector<QuizItem> read_quiz(std::istream& jsonl, std::istream& key_csv) {
    std::vector<QuizItem> items;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(jsonl, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            QuizItem item;
            item.quiz_id = j.at("quiz_id").get<std::string>();
            item.record_id = j.at("record_id").get<std::string>();
            item.title = j.at("title").get<std::string>();
            item.abstract = j.at("abstract").get<std::string>();
            item.seed = j.at("seed").get<std::uint64_t>();
            for (const auto& o : j.at("options"))
                item.options.push_back({o.at("cluster_label").get<std::size_t>(),
                                        o.at("top_tokens").get<std::vector<std::string>>()});
            items.push_back(std::move(item));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, std::string("malformed quiz item: ") + e.what());
        }
    }
    std::unordered_map<std::string, QuizItem*> by_id;
    for (auto& it : items) by_id[it.quiz_id] = &it;
    const auto rows = read_csv(key_csv);
    if (rows.empty()) throw SchemaError("empty quiz key");
    static constexpr std::string_view cols[] = {"quiz_id", "answer_index"};
    const auto idx = require_columns(rows.front(), cols);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        auto it = by_id.find(f.at(idx[0]));
        if (it == by_id.end()) throw ParseError(rows[r].line, "key names unknown quiz_id '" + f[idx[0]] + "'");
        auto a = parse_number<std::size_t>(f.at(idx[1]));
        if (!a || *a >= it->second->options.size()) throw ParseError(rows[r].line, "bad answer_index");
        it->second->answer_index = *a;
    }
    return items;
}

// ---------------------------------------------------------------------------
// Scoring

struct QuizResponse {
    std::string quiz_id;
    std::string reviewer_id;
    std::size_t choice = 0;
};

/// CSV `quiz_id,reviewer_id,choice`.
inline std::vector<QuizResponse> read_responses_csv(std::istream& in) {
    const auto rows = read_csv(in);
    if (rows.empty()) throw SchemaError("empty response file: missing header");
    static constexpr std::string_view cols[] = {"quiz_id", "reviewer_id", "choice"};
    const auto idx = require_columns(rows.front(), cols);
    std::vector<QuizResponse> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r].fields;
        if (f.size() != rows.front().fields.size()) throw ParseError(rows[r].line, "wrong field count");
        auto choice = parse_number<std::size_t>(f[idx[2]]);
        if (!choice || *choice >= kQuizOptions) throw ParseError(rows[r].line, "choice must be in [0, 5)");
        out.push_back({f[idx[0]], f[idx[1]], *choice});
    }
    return out;
}

struct ReviewerAgreement {
    std::size_t responses = 0;
    double accuracy = 0.0;
    std::optional<double> cohen_kappa;
};

struct DistanceGroup {
    std::vector<double> distances;
    double mean = 0.0;
    double median = 0.0;
};

struct DistanceSplit {
    bool degenerate = false;
    DistanceGroup correct;
    DistanceGroup wrong;
    std::optional<KsResult> ks;
    std::vector<double> bin_edges;  // shared histogram edges
    std::vector<std::size_t> correct_histogram;
    std::vector<std::size_t> wrong_histogram;
};

struct AgreementReport {
    std::size_t responses = 0;
    double accuracy = 0.0;
    std::optional<double> cohen_kappa;  // human-chosen vs model-assigned label
    std::map<std::string, ReviewerAgreement> per_reviewer;
    std::size_t interrater_items = 0;
    std::optional<double> interrater_kappa;
    std::vector<std::size_t> unvisited_clusters;
    std::optional<DistanceSplit> distance_split;
};

namespace detail {

inline std::optional<double> kappa_or_null(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.empty()) return std::nullopt;
    try {
        return cohen_kappa(a, b);
    } catch (const ComputeError&) {
        return std::nullopt;
    }
}

inline std::unordered_map<std::string, const QuizItem*> index_items(std::span<const QuizItem> items) {
    std::unordered_map<std::string, const QuizItem*> by_id;
    for (const auto& it : items) by_id[it.quiz_id] = &it;
    return by_id;
}

}  // namespace detail

/// Accuracy, model-vs-human kappa over the cluster label space, per-reviewer
/// breakdown and the interrater kappa on items answered by two reviewers.
inline AgreementReport score_agreement(std::span<const QuizItem> items, std::span<const QuizResponse> responses,
                                       std::size_t k = 0) {
    if (responses.empty()) throw ArgumentError("empty response set");
    const auto by_id = detail::index_items(items);

    AgreementReport rep;
    std::vector<std::size_t> human, truth;
    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> per;
    std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> per_item;  // quiz -> (reviewer, label)
    std::size_t correct = 0;
    for (const auto& r : responses) {
        auto it = by_id.find(r.quiz_id);
        if (it == by_id.end()) throw ArgumentError("response for unknown quiz_id '" + r.quiz_id + "'");
        const QuizItem& item = *it->second;
        if (r.choice >= item.options.size()) throw ArgumentError("choice out of range for '" + r.quiz_id + "'");
        const std::size_t chosen = item.options[r.choice].cluster_label;
        human.push_back(chosen);
        truth.push_back(item.model_label());
        correct += r.choice == item.answer_index;
        per[r.reviewer_id].first.push_back(chosen);
        per[r.reviewer_id].second.push_back(item.model_label());
        per_item[r.quiz_id].emplace_back(r.reviewer_id, chosen);
    }
    rep.responses = responses.size();
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(responses.size());
    rep.cohen_kappa = detail::kappa_or_null(human, truth);
    for (const auto& [reviewer, labels] : per) {
        ReviewerAgreement ra;
        ra.responses = labels.first.size();
        std::size_t ok = 0;
        for (std::size_t i = 0; i < labels.first.size(); ++i) ok += labels.first[i] == labels.second[i];
        ra.accuracy = static_cast<double>(ok) / static_cast<double>(ra.responses);
        ra.cohen_kappa = detail::kappa_or_null(labels.first, labels.second);
        rep.per_reviewer[reviewer] = ra;
    }
    std::vector<std::size_t> first, second;
    for (const auto& [quiz, answers] : per_item) {
        for (std::size_t j = 1; j < answers.size(); ++j) {
            if (answers[j].first == answers[0].first) continue;
            first.push_back(answers[0].second);
            second.push_back(answers[j].second);
            break;
        }
    }
    rep.interrater_items = first.size();
    rep.interrater_kappa = detail::kappa_or_null(first, second);

    if (k > 0) {
        std::vector<bool> seen(k, false);
        for (const auto& item : items)
            if (item.model_label() < k) seen[item.model_label()] = true;
        for (std::size_t c = 0; c < k; ++c)
            if (!seen[c]) rep.unvisited_clusters.push_back(c);
    }
    return rep;
}

namespace detail {

inline DistanceGroup summarize_group(std::vector<double> d) {
    DistanceGroup g;
    g.distances = d;
    if (d.empty()) return g;
    double s = 0.0;
    for (double x : d) s += x;
    g.mean = s / static_cast<double>(d.size());
    std::sort(d.begin(), d.end());
    const std::size_t h = d.size() / 2;
    g.median = d.size() % 2 ? d[h] : 0.5 * (d[h - 1] + d[h]);
    return g;
}

}  // namespace detail

/// Distance from each reviewed document to its assigned centroid, split by
/// whether the reviewer picked the model's option; KS test between the groups.
/// `ids` names the rows of `embeddings` / `model.assignments`.
inline DistanceSplit distance_split_analysis(std::span<const QuizItem> items, std::span<const QuizResponse> responses,
                                             const Matrix& embeddings, std::span<const std::string> ids,
                                             const ClusterModel& model, std::size_t bins = 20) {
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < ids.size(); ++i) row_of[ids[i]] = i;
    const auto by_id = detail::index_items(items);

    std::vector<double> correct, wrong;
    for (const auto& r : responses) {
        auto it = by_id.find(r.quiz_id);
        if (it == by_id.end()) throw ArgumentError("response for unknown quiz_id '" + r.quiz_id + "'");
        auto row = row_of.find(it->second->record_id);
        if (row == row_of.end()) throw ArgumentError("quiz document '" + it->second->record_id + "' not embedded");
        const std::size_t i = row->second;
        const double d = euclidean_distance(embeddings.row(i), model.centroids.row(model.assignments[i]));
        (r.choice == it->second->answer_index ? correct : wrong).push_back(d);
    }
    DistanceSplit out;
    out.correct = detail::summarize_group(correct);
    out.wrong = detail::summarize_group(wrong);
    out.degenerate = correct.empty() || wrong.empty();
    if (!out.degenerate) out.ks = ks_two_sample(correct, wrong);

    if (!correct.empty() || !wrong.empty()) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (double x : correct) lo = std::min(lo, x), hi = std::max(hi, x);
        for (double x : wrong) lo = std::min(lo, x), hi = std::max(hi, x);
        if (hi == lo) hi = lo + 1.0;
        for (std::size_t b = 0; b <= bins; ++b)
            out.bin_edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
        auto hist = [&](const std::vector<double>& xs) {
            std::vector<std::size_t> h(bins, 0);
            for (double x : xs) {
                auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
                ++h[std::min(b, bins - 1)];
            }
            return h;
        };
        out.correct_histogram = hist(correct);
        out.wrong_histogram = hist(wrong);
    }
    return out;
}

inline nlohmann::ordered_json to_json(const AgreementReport& rep) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    nlohmann::ordered_json j;
    j["responses"] = rep.responses;
    j["accuracy"] = rep.accuracy;
    j["cohen_kappa"] = opt(rep.cohen_kappa);
    auto& per = j["per_reviewer"] = nlohmann::ordered_json::object();
    for (const auto& [id, r] : rep.per_reviewer)
        per[id] = {{"responses", r.responses}, {"accuracy", r.accuracy}, {"cohen_kappa", opt(r.cohen_kappa)}};
    j["interrater_items"] = rep.interrater_items;
    j["interrater_kappa"] = opt(rep.interrater_kappa);
    j["unvisited_clusters"] = rep.unvisited_clusters;
    if (rep.distance_split) {
        const auto& s = *rep.distance_split;
        nlohmann::ordered_json d;
        d["degenerate"] = s.degenerate;
        if (s.degenerate) d["note"] = "split degenerate";
        d["correct"] = {{"count", s.correct.distances.size()}, {"mean", s.correct.mean}, {"median", s.correct.median}};
        d["wrong"] = {{"count", s.wrong.distances.size()}, {"mean", s.wrong.mean}, {"median", s.wrong.median}};
        if (s.ks) d["ks"] = {{"statistic", s.ks->statistic}, {"p_value", s.ks->p_value}};
        d["bin_edges"] = s.bin_edges;
        d["correct_histogram"] = s.correct_histogram;
        d["wrong_histogram"] = s.wrong_histogram;
        j["distance_split"] = std::move(d);
    }
    return j;
}

}  // namespace topictrend

#endif  // TOPICTREND_VALIDATE_HPP
