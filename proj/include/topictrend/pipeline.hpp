#ifndef TOPICTREND_PIPELINE_HPP
#define TOPICTREND_PIPELINE_HPP

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "topictrend/analyze.hpp"
#include "topictrend/cluster.hpp"
#include "topictrend/common.hpp"
#include "topictrend/corpus.hpp"
#include "topictrend/embedding.hpp"
#include "topictrend/project.hpp"
#include "topictrend/text.hpp"
#include "topictrend/validate.hpp"

namespace topictrend {

inline constexpr std::string_view kToolVersion = "topictrend 1.0.0";

namespace fs = std::filesystem;

inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::string hex;
    hex.reserve(2 * len);
    static constexpr char digits[] = "0123456789abcdef";
    for (unsigned int i = 0; i < len; ++i) {
        hex += digits[md[i] >> 4];
        hex += digits[md[i] & 0xF];
    }
    return hex;
}

// ---------------------------------------------------------------------------
// Configuration: `key = value` lines, `#` comments, lists comma-separated.
// Relative paths resolve against the config file's directory.

struct PipelineConfig {
    fs::path corpus;
    RecordFormat corpus_format = RecordFormat::csv;
    std::optional<fs::path> stop_words;
    std::size_t min_count = 50;
    bool count_pruned_tokens = true;
    FilterCriteria filter;
    fs::path vectors;
    std::vector<std::size_t> k_values{15, 60};
    bool sweep = true;
    std::size_t sweep_min = 2;
    std::size_t sweep_max = 80;
    bool sweep_baseline = false;
    std::size_t baseline_n_init = 100;
    KMeansOptions kmeans;
    TsneConfig tsne;
    std::vector<double> grid_perplexity{5, 30, 50};
    std::vector<double> grid_learning_rate{10, 200, 1000};
    AxisConfig axes;
    QuadrantMode quadrant_mode = QuadrantMode::cluster;
    bool quiz = true;
    QuizParams quiz_params;
    std::map<std::size_t, fs::path> names;  // k -> analyst-edited label,name CSV
    std::uint64_t seed = 0;
    fs::path out_dir = "out";

    /// Effective entries (after overrides) used for the config hash; out_dir excluded.
    std::map<std::string, std::string> entries;

    std::string canonical() const {
        std::string s;
        for (const auto& [k, v] : entries)
            if (k != "out_dir") s += k + "=" + v + "\n";
        return s;
    }
    std::string hash() const { return sha256_hex(canonical()); }

    void set(const std::string& key, const std::string& value, const fs::path& base);
    void validate() const;

    static PipelineConfig parse(std::istream& in, const fs::path& base_dir) {
        PipelineConfig cfg;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            std::string_view body = trim(std::string_view(line).substr(0, hash));
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) throw ParseError(lineno, "expected 'key = value'");
            const std::string key(trim(body.substr(0, eq)));
            const std::string value(trim(body.substr(eq + 1)));
            try {
                cfg.set(key, value, base_dir);
            } catch (const std::exception& e) {
                throw ParseError(lineno, e.what());
            }
        }
        return cfg;
    }

    static PipelineConfig load(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config " + path.string());
        return parse(in, path.parent_path());
    }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ArgumentError("expected a boolean, got '" + v + "'");
}

template <class T>
T parse_value(const std::string& key, const std::string& v) {
    auto x = parse_number<T>(v);
    if (!x) throw ArgumentError("bad value '" + v + "' for " + key);
    return *x;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
    std::vector<T> out;
    for (const auto& item : split(v, ','))
        if (!item.empty()) out.push_back(parse_value<T>(key, item));
    return out;
}

inline std::set<std::string> parse_set(const std::string& v) {
    std::set<std::string> out;
    for (auto& item : split(v, ','))
        if (!item.empty()) out.insert(item);
    return out;
}

}  // namespace detail

inline void PipelineConfig::set(const std::string& key, const std::string& value, const fs::path& base) {
    using detail::parse_bool;
    using detail::parse_value;
    auto path = [&](const std::string& v) { return fs::path(v).is_absolute() ? fs::path(v) : base / v; };
    entries[key] = value;

    if (key == "corpus") corpus = path(value);
    else if (key == "corpus_format") corpus_format = parse_record_format(value);
    else if (key == "stop_words") stop_words = value.empty() ? std::nullopt : std::optional<fs::path>(path(value));
    else if (key == "min_count") min_count = parse_value<std::size_t>(key, value);
    else if (key == "count_pruned_tokens") count_pruned_tokens = parse_bool(value);
    else if (key == "min_tokens") filter.min_tokens = parse_value<std::size_t>(key, value);
    else if (key == "institutes") filter.institutes = detail::parse_set(value);
    else if (key == "activity_prefixes") filter.activity_prefixes = detail::parse_set(value);
    else if (key == "excluded_activities") filter.excluded_activities = detail::parse_set(value);
    else if (key == "year_start") filter.year_start = parse_value<int>(key, value);
    else if (key == "year_end") filter.year_end = parse_value<int>(key, value);
    else if (key == "vectors") vectors = path(value);
    else if (key == "k") k_values = detail::parse_list<std::size_t>(key, value);
    else if (key == "sweep") sweep = parse_bool(value);
    else if (key == "sweep_min") sweep_min = parse_value<std::size_t>(key, value);
    else if (key == "sweep_max") sweep_max = parse_value<std::size_t>(key, value);
    else if (key == "sweep_baseline") sweep_baseline = parse_bool(value);
    else if (key == "baseline_n_init") baseline_n_init = parse_value<std::size_t>(key, value);
    else if (key == "kmeans_tol") kmeans.tol = parse_value<double>(key, value);
    else if (key == "kmeans_max_iter") kmeans.max_iter = parse_value<std::size_t>(key, value);
    else if (key == "tsne_perplexity") tsne.perplexity = parse_value<double>(key, value);
    else if (key == "tsne_learning_rate") tsne.learning_rate = parse_value<double>(key, value);
    else if (key == "tsne_iterations") tsne.iterations = parse_value<std::size_t>(key, value);
    else if (key == "tsne_early_exaggeration") tsne.early_exaggeration = parse_value<double>(key, value);
    else if (key == "tsne_init") {
        if (value == "pca") tsne.init = TsneInit::pca;
        else if (value == "random") tsne.init = TsneInit::random;
        else throw ArgumentError("tsne_init must be pca or random");
    }
    else if (key == "tsne_grid_perplexity") grid_perplexity = detail::parse_list<double>(key, value);
    else if (key == "tsne_grid_learning_rate") grid_learning_rate = detail::parse_list<double>(key, value);
    else if (key == "axis_x_positive") axes.x_positive = value;
    else if (key == "axis_x_negative") axes.x_negative = value;
    else if (key == "axis_y_positive") axes.y_positive = value;
    else if (key == "axis_y_negative") axes.y_negative = value;
    else if (key == "quadrant_mode") {
        if (value == "cluster") quadrant_mode = QuadrantMode::cluster;
        else if (value == "grant") quadrant_mode = QuadrantMode::grant;
        else throw ArgumentError("quadrant_mode must be cluster or grant");
    }
    else if (key == "quiz") quiz = parse_bool(value);
    else if (key == "quiz_sample_fraction") quiz_params.sample_fraction = parse_value<double>(key, value);
    else if (key == "quiz_items") quiz_params.n_items = parse_value<std::size_t>(key, value);
    else if (key == "quiz_reviewers") quiz_params.n_reviewers = parse_value<std::size_t>(key, value);
    else if (key == "quiz_overlap") quiz_params.overlap_fraction = parse_value<double>(key, value);
    else if (key == "quiz_stratified") quiz_params.stratified = parse_bool(value);
    else if (key == "seed") {
        seed = parse_value<std::uint64_t>(key, value);
        quiz_params.seed = seed;
        tsne.seed = seed;
    }
    else if (key == "out_dir") out_dir = path(value);
    else if (key.rfind("names_k", 0) == 0) names[parse_value<std::size_t>(key, key.substr(7))] = path(value);
    else throw ArgumentError("unknown config key '" + key + "'");
}

inline void PipelineConfig::validate() const {
    if (corpus.empty()) throw ArgumentError("config: corpus path required");
    if (vectors.empty()) throw ArgumentError("config: vectors path required");
    if (min_count < 1) throw ArgumentError("config: min_count must be >= 1");
    filter.validate();
    if (k_values.empty()) throw ArgumentError("config: k list is empty");
    for (auto k : k_values)
        if (k < 2) throw ArgumentError("config: k values must be >= 2");
    if (sweep && (sweep_min < 2 || sweep_max < sweep_min)) throw ArgumentError("config: bad sweep range");
}

// ---------------------------------------------------------------------------
// Scatter plot

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

/// One circle per document coloured by cluster plus one text label per
/// cluster at its 2-D centroid. Names fall back to the cluster number.
inline std::string emit_scatter_svg(const Matrix& projection, std::span<const std::size_t> labels, std::size_t k,
                                    const TopicNameMap& names = {}) {
    if (projection.cols() != 2 || projection.rows() != labels.size())
        throw ArgumentError("emit_scatter_svg: projection not aligned with labels");
    constexpr double size = 800.0, margin = 40.0;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (projection.rows() > 0) {
        xmin = xmax = projection(0, 0);
        ymin = ymax = projection(0, 1);
        for (std::size_t i = 0; i < projection.rows(); ++i) {
            xmin = std::min(xmin, projection(i, 0)), xmax = std::max(xmax, projection(i, 0));
            ymin = std::min(ymin, projection(i, 1)), ymax = std::max(ymax, projection(i, 1));
        }
    }
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
    auto sx = [&](double x) { return margin + (x - xmin) / span * (size - 2 * margin); };
    auto sy = [&](double y) { return size - margin - (y - ymin) / span * (size - 2 * margin); };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v);
        return std::string(buf);
    };
    auto colour = [&](std::size_t c) { return "hsl(" + std::to_string(c * 360 / std::max<std::size_t>(k, 1)) + ",65%,50%)"; };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\"0 0 800 800\">\n"
        << "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n<g class=\"documents\">\n";
    std::vector<double> cx(k, 0.0), cy(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < projection.rows(); ++i) {
        const auto c = labels[i];
        if (c >= k) throw ArgumentError("emit_scatter_svg: label out of range");
        svg << "<circle class=\"doc\" cx=\"" << num(sx(projection(i, 0))) << "\" cy=\"" << num(sy(projection(i, 1)))
            << "\" r=\"2.5\" fill=\"" << colour(c) << "\"/>\n";
        cx[c] += projection(i, 0), cy[c] += projection(i, 1), ++cnt[c];
    }
    svg << "</g>\n<g class=\"centroids\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (std::size_t c = 0; c < k; ++c) {
        const double x = cnt[c] ? cx[c] / static_cast<double>(cnt[c]) : 0.0;
        const double y = cnt[c] ? cy[c] / static_cast<double>(cnt[c]) : 0.0;
        svg << "<text class=\"centroid\" x=\"" << num(sx(x)) << "\" y=\"" << num(sy(y)) << "\" text-anchor=\"middle\">"
            << xml_escape(topic_name(names, c)) << "</text>\n";
    }
    svg << "</g>\n</svg>\n";
    return svg.str();
}

// ---------------------------------------------------------------------------
// Stages

struct ManifestEntry {
    std::string stage;
    std::string file;
    std::string sha256;
};

struct RunManifest {
    std::string tool_version{kToolVersion};
    std::string config_hash;
    std::vector<ManifestEntry> outputs;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["tool_version"] = tool_version;
        j["config_hash"] = config_hash;
        auto& arr = j["outputs"] = nlohmann::ordered_json::array();
        for (const auto& e : outputs) arr.push_back({{"stage", e.stage}, {"file", e.file}, {"sha256", e.sha256}});
        return j;
    }
};

/// Stage failure; the message carries the stage name.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Runs pipeline stages against one output directory; every stage reads its
/// inputs from the files earlier stages wrote there.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config, std::ostream& log = std::cerr) : cfg_(std::move(config)), log_(log) {}

    const PipelineConfig& config() const { return cfg_; }
    const fs::path& out_dir() const { return cfg_.out_dir; }
    const std::vector<ManifestEntry>& outputs() const { return outputs_; }

    void filter() {
        stage("filter", [&] {
            const auto records = load_records(cfg_.corpus, cfg_.corpus_format);
            const auto& sw = stop_words();
            std::vector<TokenStream> tokens(records.size());
            parallel_for(records.size(), [&](std::size_t i) { tokens[i] = tokenize(records[i].abstract, sw); });
            std::unordered_map<std::string_view, std::size_t> counts;
            if (cfg_.count_pruned_tokens) {
                const auto vocab = build_vocabulary(tokens, cfg_.min_count);
                for (std::size_t i = 0; i < records.size(); ++i)
                    counts[records[i].record_id] = count_in_vocabulary(vocab, tokens[i]);
            } else {
                for (std::size_t i = 0; i < records.size(); ++i) counts[records[i].record_id] = tokens[i].size();
            }
            auto [kept, funnel] = filter_records(std::span<const GrantRecord>(records), cfg_.filter,
                                                 [&](const GrantRecord& g) { return counts.at(g.record_id); });
            if (kept.empty()) throw ComputeError("no records survive the inclusion funnel");
            std::ostringstream recs, fun;
            write_records_csv(recs, kept);
            funnel.write_csv(fun);
            emit("filtered.csv", recs.str());
            emit("funnel.csv", fun.str());
            for (const auto& [name, c] : funnel.stages) log_ << "  funnel " << name << ": " << c << '\n';
        });
    }

    void tfidf() {
        stage("tfidf", [&] {
            const auto records = filtered_records();
            const auto tokens = tokenize_all(records);
            const auto model = fit_tfidf(build_vocabulary(tokens, cfg_.min_count));
            emit("tfidf.json", to_json(model).dump(1) + "\n");
            log_ << "  vocabulary: " << model.size() << " tokens over " << model.corpus_size << " documents\n";
        });
    }

    void embed() {
        stage("embed", [&] {
            const auto records = filtered_records();
            const auto model = tfidf_model();
            if (!fs::exists(cfg_.vectors)) throw std::runtime_error("embedding file not found: " + cfg_.vectors.string());
            const auto store = load_word_vectors(cfg_.vectors);
            for (const auto& t : store.duplicate_tokens) log_ << "  warning: duplicate vector for '" << t << "'\n";
            const auto tokens = tokenize_all(records);
            std::vector<std::string> ids;
            for (const auto& r : records) ids.push_back(r.record_id);
            const auto result = embed_corpus(store, model, ids, tokens);
            std::ostringstream emb, exc;
            write_embeddings_csv(emb, result.embeddings);
            exc << "record_id,reason\n";
            for (const auto& id : result.excluded) {
                exc << csv_escape(id) << ",no in-vocabulary token has a word vector\n";
                log_ << "  excluded " << id << ": unembeddable\n";
            }
            nlohmann::ordered_json stats;
            stats["documents"] = records.size();
            stats["embedded"] = result.embeddings.size();
            stats["excluded"] = result.excluded.size();
            stats["dimension"] = store.dimension();
            stats["vocabulary_missing_from_store"] = result.vocabulary_missing_from_store;
            emit("embeddings.csv", emb.str());
            emit("embed_exclusions.csv", exc.str());
            emit("embed_stats.json", stats.dump(1) + "\n");
        });
    }

    void cluster() {
        stage("cluster", [&] {
            const auto emb = embeddings();
            const auto tree = ward_tree(emb.values);
            for (auto k : cfg_.k_values) {
                if (k > emb.size()) throw ArgumentError("k=" + std::to_string(k) + " exceeds document count");
                const auto model = fit_hsk(emb.values, tree, k, cfg_.kmeans);
                emit("model_k" + std::to_string(k) + ".json", to_json(model, emb.ids).dump(1) + "\n");
                log_ << "  k=" << k << ": inertia " << model.inertia << " after " << model.iterations_used
                     << " iterations\n";
            }
        });
    }

    void sweep() {
        stage("sweep", [&] {
            const auto emb = embeddings();
            const std::size_t hi = std::min(cfg_.sweep_max, emb.size() - 1);
            const auto q = sweep_k(emb.values, cfg_.sweep_min, hi, cfg_.kmeans);
            std::ostringstream os;
            write_sweep_csv(os, q);
            emit("sweep.csv", os.str());
            if (cfg_.sweep_baseline) {
                std::ostringstream cmp;
                cmp << "k,hsk_silhouette,baseline_silhouette,hsk_inertia,baseline_inertia\n";
                for (const auto& p : q) {
                    const auto base = baseline_kmeans(emb.values, p.k, cfg_.baseline_n_init, cfg_.seed, cfg_.kmeans);
                    cmp << p.k << ',' << format_double(p.silhouette) << ','
                        << format_double(silhouette_score(emb.values, base.assignments)) << ','
                        << format_double(p.inertia) << ',' << format_double(base.inertia) << '\n';
                }
                emit("sweep_baseline.csv", cmp.str());
            }
        });
    }

    void project(bool grid = false) {
        stage("project", [&] {
            const auto emb = embeddings();
            if (grid) {
                for (double perp : cfg_.grid_perplexity)
                    for (double lr : cfg_.grid_learning_rate) {
                        auto tc = cfg_.tsne;
                        tc.perplexity = perp;
                        tc.learning_rate = lr;
                        const auto proj = tsne_project(emb.values, tc);
                        const auto labels = models().begin()->second.model.assignments;
                        emit("projection_grid_p" + format_double(perp) + "_lr" + format_double(lr) + ".csv",
                             projection_csv(emb.ids, proj.coords, labels));
                    }
                return;
            }
            const auto proj = tsne_project(emb.values, cfg_.tsne);
            std::ostringstream kl;
            write_kl_csv(kl, proj);
            emit("tsne_kl.csv", kl.str());
            for (const auto& [k, loaded] : models()) {
                check_alignment(loaded.ids, emb.ids);
                emit("projection_k" + std::to_string(k) + ".csv", projection_csv(emb.ids, proj.coords, loaded.model.assignments));
                emit("scatter_k" + std::to_string(k) + ".svg",
                     emit_scatter_svg(proj.coords, loaded.model.assignments, k, topic_names(k)));
            }
        });
    }

    void summarize() {
        stage("summarize", [&] {
            const auto emb = embeddings();
            const auto records = aligned_records(emb.ids);
            const auto model = tfidf_model();
            const auto tokens = tokenize_all(records);
            std::vector<DocumentTermWeights> weights(records.size());
            parallel_for(records.size(), [&](std::size_t i) { weights[i] = doc_term_weights(model, tokens[i]); });
            for (const auto& [k, loaded] : models()) {
                check_alignment(loaded.ids, emb.ids);
                const auto summaries = cluster_summary(loaded.model, model, weights, emb.values, records);
                const auto tag = std::to_string(k);
                emit("summaries_k" + tag + ".json", to_json(summaries, records).dump(1) + "\n");
                std::ostringstream tmpl, sizes;
                write_topic_names(tmpl, naming_template(summaries));
                sizes << "label,count\n";
                const auto counts = cluster_sizes(loaded.model);
                for (std::size_t c = 0; c < counts.size(); ++c) sizes << c << ',' << counts[c] << '\n';
                emit("naming_template_k" + tag + ".csv", tmpl.str());
                emit("cluster_sizes_k" + tag + ".csv", sizes.str());
            }
        });
    }

    void trends() {
        stage("trends", [&] {
            const auto emb = embeddings();
            const auto records = aligned_records(emb.ids);
            const YearRange range{cfg_.filter.year_start, cfg_.filter.year_end};
            for (const auto& [k, loaded] : models()) {
                check_alignment(loaded.ids, emb.ids);
                const auto tag = std::to_string(k);
                const auto ranked = build_trend_reports(records, loaded.model.assignments, k, range, topic_names(k));
                std::ostringstream csv;
                write_trends_csv(csv, ranked, range);
                emit("trends_k" + tag + ".csv", csv.str());

                nlohmann::ordered_json summary;
                summary["k"] = k;
                summary["mean_slope"] = ranked.mean_slope;
                std::int64_t total = 0;
                for (const auto& r : ranked.reports) total += r.total();
                summary["total_dollars"] = total;
                auto em = nlohmann::ordered_json::array(), ex = nlohmann::ordered_json::array();
                for (const auto& r : ranked.reports) {
                    if (r.emerged) em.push_back({{"label", r.label}, {"first_year", *r.first_funded_year}});
                    if (r.extinct) ex.push_back({{"label", r.label}, {"last_year", *r.last_funded_year}});
                }
                summary["emerged"] = std::move(em);
                summary["extinct"] = std::move(ex);
                emit("trend_summary_k" + tag + ".json", summary.dump(1) + "\n");

                const auto proj_path = cfg_.out_dir / ("projection_k" + tag + ".csv");
                if (fs::exists(proj_path)) {
                    const auto proj = read_projection(proj_path, emb.ids);
                    std::vector<double> slopes(k);
                    for (const auto& r : ranked.reports) slopes[r.label] = r.ols_slope;
                    const auto rep = quadrant_growth(proj, loaded.model.assignments, k, slopes, cfg_.axes, cfg_.quadrant_mode);
                    for (const auto& w : rep.warnings) log_ << "  warning: " << w << '\n';
                    emit("quadrants_k" + tag + ".json", to_json(rep).dump(1) + "\n");
                }
            }
        });
    }

    void quiz() {
        stage("quiz", [&] {
            const auto emb = embeddings();
            const auto records = aligned_records(emb.ids);
            for (const auto& [k, loaded] : models()) {
                if (k < kQuizOptions) {
                    log_ << "  skipping quiz for k=" << k << ": need >=5 clusters for 5-option quiz\n";
                    continue;
                }
                const auto tag = std::to_string(k);
                const auto summaries = read_summaries(k);
                const auto plan = generate_quiz(loaded.model, summaries, records, cfg_.quiz_params);
                std::ostringstream form, key, slots, sheet;
                write_quiz_jsonl(form, plan);
                write_quiz_key_csv(key, plan);
                write_quiz_plan_csv(slots, plan);
                write_quiz_sheet(sheet, plan);
                emit("quiz_k" + tag + ".jsonl", form.str());
                emit("quiz_key_k" + tag + ".csv", key.str());
                emit("quiz_plan_k" + tag + ".csv", slots.str());
                emit("quiz_sheet_k" + tag + ".txt", sheet.str());
                for (auto c : plan.unvisited_clusters) log_ << "  note: cluster " << c << " not sampled in quiz k=" << k << '\n';
            }
        });
    }

    void score(std::size_t k, const fs::path& responses_path) {
        stage("score", [&] {
            const auto tag = std::to_string(k);
            std::ifstream form(cfg_.out_dir / ("quiz_k" + tag + ".jsonl")), key(cfg_.out_dir / ("quiz_key_k" + tag + ".csv"));
            if (!form || !key) throw std::runtime_error("quiz files for k=" + tag + " not found in " + cfg_.out_dir.string());
            const auto items = read_quiz(form, key);
            std::ifstream rin(responses_path);
            if (!rin) throw std::runtime_error("cannot open responses " + responses_path.string());
            const auto responses = read_responses_csv(rin);
            auto report = score_agreement(items, responses, k);
            const auto emb = embeddings();
            const auto all = models();
            auto it = all.find(k);
            if (it == all.end()) throw std::runtime_error("no model for k=" + tag);
            report.distance_split = distance_split_analysis(items, responses, emb.values, emb.ids, it->second.model);
            emit("agreement_k" + tag + ".json", to_json(report).dump(1) + "\n");
        });
    }

    /// All stages in order, then manifest.json.
    RunManifest run() {
        filter();
        tfidf();
        embed();
        cluster();
        if (cfg_.sweep) sweep();
        project();
        summarize();
        trends();
        if (cfg_.quiz) quiz();
        RunManifest m;
        m.config_hash = cfg_.hash();
        m.outputs = outputs_;
        write_file("manifest.json", m.to_json().dump(1) + "\n");
        return m;
    }

private:
    template <class Fn>
    void stage(const std::string& name, Fn&& fn) {
        log_ << "[" << name << "]\n";
        current_stage_ = name;
        try {
            fs::create_directories(cfg_.out_dir);
            fn();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
    }

    void write_file(const std::string& name, const std::string& content) {
        std::ofstream out(cfg_.out_dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (cfg_.out_dir / name).string());
        out << content;
    }

    void emit(const std::string& name, const std::string& content) {
        write_file(name, content);
        outputs_.push_back({current_stage_, name, sha256_hex(content)});
    }

    std::ifstream open_output(const std::string& name) const {
        std::ifstream in(cfg_.out_dir / name, std::ios::binary);
        if (!in) throw std::runtime_error("missing stage input " + (cfg_.out_dir / name).string() + " (run earlier stages first)");
        return in;
    }

    const StopWords& stop_words() {
        if (!custom_stop_words_ && cfg_.stop_words) custom_stop_words_ = StopWords::load(*cfg_.stop_words);
        return custom_stop_words_ ? *custom_stop_words_ : StopWords::english();
    }

    std::vector<TokenStream> tokenize_all(std::span<const GrantRecord> records) {
        const auto& sw = stop_words();
        std::vector<TokenStream> tokens(records.size());
        parallel_for(records.size(), [&](std::size_t i) { tokens[i] = tokenize(records[i].abstract, sw); });
        return tokens;
    }

    std::vector<GrantRecord> filtered_records() {
        auto in = open_output("filtered.csv");
        return parse_records_csv(in);
    }

    TfIdfModel tfidf_model() {
        auto in = open_output("tfidf.json");
        return tfidf_from_json(nlohmann::json::parse(in));
    }

    EmbeddingMatrix embeddings() {
        auto in = open_output("embeddings.csv");
        return read_embeddings_csv(in);
    }

    std::vector<GrantRecord> aligned_records(const std::vector<std::string>& ids) {
        auto all = filtered_records();
        std::unordered_map<std::string, std::size_t> at;
        for (std::size_t i = 0; i < all.size(); ++i) at[all[i].record_id] = i;
        std::vector<GrantRecord> out;
        for (const auto& id : ids) {
            auto it = at.find(id);
            if (it == at.end()) throw std::runtime_error("embedded record '" + id + "' missing from filtered.csv");
            out.push_back(all[it->second]);
        }
        return out;
    }

    std::map<std::size_t, LoadedClusterModel> models() {
        std::map<std::size_t, LoadedClusterModel> out;
        for (auto k : cfg_.k_values) {
            auto in = open_output("model_k" + std::to_string(k) + ".json");
            out.emplace(k, cluster_model_from_json(nlohmann::json::parse(in)));
        }
        return out;
    }

    std::vector<ClusterSummary> read_summaries(std::size_t k) {
        auto in = open_output("summaries_k" + std::to_string(k) + ".json");
        return summaries_from_json(nlohmann::json::parse(in));
    }

    TopicNameMap topic_names(std::size_t k) {
        auto it = cfg_.names.find(k);
        if (it == cfg_.names.end()) return {};
        std::ifstream in(it->second);
        if (!in) throw std::runtime_error("cannot open topic names " + it->second.string());
        return read_topic_names(in, k);
    }

    static void check_alignment(const std::vector<std::string>& a, const std::vector<std::string>& b) {
        if (a != b) throw std::runtime_error("cluster model rows do not match embeddings.csv; rerun the cluster stage");
    }

    static std::string projection_csv(const std::vector<std::string>& ids, const Matrix& coords,
                                      std::span<const std::size_t> labels) {
        std::ostringstream os;
        os << "record_id,x,y,cluster_label\n";
        for (std::size_t i = 0; i < ids.size(); ++i)
            os << csv_escape(ids[i]) << ',' << format_double(coords(i, 0)) << ',' << format_double(coords(i, 1)) << ','
               << labels[i] << '\n';
        return os.str();
    }

    static Matrix read_projection(const fs::path& path, const std::vector<std::string>& ids) {
        std::ifstream in(path);
        const auto rows = read_csv(in);
        if (rows.empty()) throw SchemaError("empty projection file");
        static constexpr std::string_view cols[] = {"record_id", "x", "y"};
        const auto idx = require_columns(rows.front(), cols);
        if (rows.size() - 1 != ids.size()) throw std::runtime_error("projection does not match embeddings");
        Matrix m(ids.size(), 2);
        for (std::size_t r = 1; r < rows.size(); ++r) {
            const auto& f = rows[r].fields;
            if (f.at(idx[0]) != ids[r - 1]) throw ParseError(rows[r].line, "projection row order differs from embeddings");
            auto x = parse_number<double>(f.at(idx[1])), y = parse_number<double>(f.at(idx[2]));
            if (!x || !y) throw ParseError(rows[r].line, "malformed coordinate");
            m(r - 1, 0) = *x;
            m(r - 1, 1) = *y;
        }
        return m;
    }

    PipelineConfig cfg_;
    std::ostream& log_;
    std::vector<ManifestEntry> outputs_;
    std::string current_stage_;
    std::optional<StopWords> custom_stop_words_;
};

}  // namespace topictrend

#endif  // TOPICTREND_PIPELINE_HPP
