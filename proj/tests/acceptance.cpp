// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "support.hpp"
#include "topictrend/pipeline.hpp"

using namespace topictrend;
namespace tt = tt_test;

namespace {

// Tolerances and limits.
constexpr double kSilhouetteTol = 1e-9;
constexpr double kInertiaTol = 1e-12;
constexpr double kFormulaTol = 1e-10;
constexpr double kAffinitySumTol = 1e-9;
constexpr double kEntropyTol = 1e-3;
constexpr double kGradientRelTol = 1e-4;
constexpr double kKsTol = 1e-12;
constexpr double kMinAri = 0.9;
constexpr double kBlobSeparation = 5.0;

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = what;
        pass = pass && ok;
    }
};

Outcome ac1_clustering_oracles() {
    Outcome o;
    std::mt19937_64 rng(101);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 2 + uniform_index(rng, 9), d = 1 + uniform_index(rng, 4);
        auto p = tt::random_points(rng, n, d);
        for (std::size_t k = 1; k <= n; ++k)
            o.require(tt::canonical(ward_partition(p, k).labels) == tt::naive_ward(p, k),
                      "ward partition differs from naive oracle on instance " + std::to_string(t));
    }
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 10 + uniform_index(rng, 90), k = 2 + uniform_index(rng, 8);
        auto p = tt::random_points(rng, n, 1 + uniform_index(rng, 5));
        auto labels = ward_partition(p, k).labels;
        const double ward = inertia(p, cluster_means(p, labels, k), labels);
        o.require(fit_hsk(p, k).inertia <= ward, "fit_hsk inertia above Ward initialisation on instance " + std::to_string(t));
    }
    if (o.pass) o.detail = "50 Ward instances exact, 100 hsk instances <= Ward inertia";
    return o;
}

Outcome ac2_lloyd_properties() {
    Outcome o;
    std::mt19937_64 rng(202);
    std::size_t checked = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 5 + uniform_index(rng, 196), k = 1 + uniform_index(rng, std::min<std::size_t>(n, 10));
        auto p = tt::random_points(rng, n, 1 + uniform_index(rng, 4));
        // Half the instances start from Ward, half from random distinct points.
        ClusterModel m;
        if (t % 2 == 0) {
            m = fit_hsk(p, k);
        } else {
            auto picks = sample_without_replacement(rng, n, k);
            Matrix init(k, p.cols());
            for (std::size_t c = 0; c < k; ++c)
                for (std::size_t j = 0; j < p.cols(); ++j) init(c, j) = p(picks[c], j);
            m = kmeans_refine(p, init);
        }
        for (std::size_t i = 1; i < m.inertia_trace.size(); ++i)
            o.require(m.inertia_trace[i] <= m.inertia_trace[i - 1], "inertia increased on instance " + std::to_string(t));
        if (!m.converged) continue;
        ++checked;
        // Exhaustive single-point relabel against the converged centroids.
        const double base = tt::direct_inertia(p, m.centroids, m.assignments);
        auto labels = m.assignments;
        for (std::size_t i = 0; i < n; ++i) {
            const auto own = labels[i];
            for (std::size_t c = 0; c < k; ++c) {
                if (c == own) continue;
                labels[i] = c;
                o.require(!(tt::direct_inertia(p, m.centroids, labels) < base),
                          "relabel of point " + std::to_string(i) + " lowers inertia on instance " + std::to_string(t));
            }
            labels[i] = own;
        }
    }
    o.require(checked > 0, "no converged instance");
    if (o.pass) o.detail = "100 traces monotone, " + std::to_string(checked) + " converged models locally optimal (centroids held fixed)";
    return o;
}

Outcome ac3_planted_topics() {
    Outcome o;
    auto pc = tt::planted_corpus(303);
    std::vector<TokenStream> toks;
    for (auto& text : pc.texts) toks.push_back(tokenize(text));
    auto tf = fit_tfidf(build_vocabulary(toks, 1));
    WordVectorStore store(pc.vectors.front().second.size());
    for (auto& [w, v] : pc.vectors) store.insert(w, v);
    auto emb = embed_corpus(store, tf, pc.ids, toks);
    o.require(emb.excluded.empty(), "planted documents excluded");
    auto m = fit_hsk(emb.embeddings.values, 5);
    const double ari = tt::adjusted_rand_index(m.assignments, pc.truth);
    auto sweep = sweep_k(emb.embeddings.values, 2, 10);
    std::size_t best = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i)
        if (sweep[i].silhouette > sweep[best].silhouette) best = i;
    o.require(ari >= kMinAri, "ARI " + format_double(ari) + " < 0.9");
    o.require(sweep[best].k == 5, "silhouette peaks at k=" + std::to_string(sweep[best].k));
    if (o.pass) o.detail = "ARI " + format_double(ari) + ", silhouette peak at k=5";
    return o;
}

Outcome ac4_metric_oracles() {
    Outcome o;
    std::mt19937_64 rng(404);
    for (int t = 0; t < 30; ++t) {
        auto p = tt::random_points(rng, 80, 3);
        auto m = fit_hsk(p, 2 + uniform_index(rng, 7));
        o.require(std::abs(silhouette_score(p, m.assignments) - tt::naive_silhouette(p, m.assignments)) <= kSilhouetteTol,
                  "silhouette differs from naive oracle");
        o.require(std::abs(inertia(p, m) - tt::direct_inertia(p, m.centroids, m.assignments)) <= kInertiaTol,
                  "inertia differs from direct sum");
    }
    // TF-IDF hand values.
    o.require(std::abs(smoothed_idf(4, 1) - 1.9162907319) <= kFormulaTol, "idf(N=4, df=1)");
    o.require(smoothed_idf(9, 9) == 1.0, "idf(df=N) != 1");
    std::vector<TokenStream> corpus{{"aa", "bb", "bb", "bb"}, {"aa"}, {"aa"}, {"aa"}};
    auto tf = fit_tfidf(build_vocabulary(corpus, 1));
    o.require(std::abs(doc_term_weights(tf, corpus[0]).weight(*tf.find("bb")) - 5.7488721957) <= kFormulaTol, "w = 3 idf");
    // Weighted embedding hand value.
    WordVectorStore s(2);
    s.insert("aa", std::vector<double>{0, 0});
    s.insert("bb", std::vector<double>{4, 8});
    std::vector<TokenStream> flat{{"aa", "bb"}};
    auto tf2 = fit_tfidf(build_vocabulary(flat, 1));
    auto e = embed_document(s, tf2, doc_term_weights(tf2, TokenStream{"aa", "bb", "bb", "bb"}));
    o.require(e && std::abs((*e)[0] - 3.0) <= kFormulaTol && std::abs((*e)[1] - 6.0) <= kFormulaTol, "weighted mean (3, 6)");
    if (o.pass) o.detail = "silhouette/inertia oracles on 30 instances, TF-IDF and embedding hand values";
    return o;
}

Outcome ac5_tsne() {
    Outcome o;
    std::mt19937_64 rng(505);
    {
        const double perp = 30;
        auto x = tt::random_points(rng, 100, 5);
        auto a = calibrate_affinities(x, perp);
        double total = 0;
        for (std::size_t i = 0; i < 100; ++i) {
            for (std::size_t j = 0; j < 100; ++j) {
                o.require(a.p(i, j) == a.p(j, i), "P not symmetric");
                total += a.p(i, j);
            }
            std::vector<double> row;
            double z = 0;
            for (std::size_t j = 0; j < 100; ++j)
                if (j != i) row.push_back(std::exp(-a.beta[i] * tt::sq_dist(x, i, j))), z += row.back();
            double h = 0;
            for (double v : row)
                if (v > 0) h -= v / z * std::log2(v / z);
            o.require(std::abs(h - std::log2(perp)) <= kEntropyTol, "row entropy off target");
        }
        o.require(std::abs(total - 1.0) <= kAffinitySumTol, "P does not sum to 1");
    }
    {
        auto x = tt::random_points(rng, 10, 4);
        auto p = calibrate_affinities(x, 3.0).p;
        auto y = tt::random_points(rng, 10, 2);
        auto g = kl_gradient(p, y);
        double worst = 0;
        for (std::size_t k = 0; k < y.values().size(); ++k) {
            auto yp = y, ym = y;
            yp.values()[k] += 1e-5;
            ym.values()[k] -= 1e-5;
            const double fd = (kl_divergence(p, yp) - kl_divergence(p, ym)) / 2e-5;
            worst = std::max(worst, std::abs(g.values()[k] - fd) / std::max(std::abs(fd), 1e-8));
        }
        o.require(worst <= kGradientRelTol, "gradient relative error " + format_double(worst));
    }
    {
        auto x = tt::random_points(rng, 150, 10);
        auto proj = tsne_project(x, TsneConfig{});
        double kl250 = NAN, kl1000 = NAN;
        for (auto [it, kl] : proj.kl_trace) {
            if (it == 250) kl250 = kl;
            if (it == 1000) kl1000 = kl;
        }
        o.require(kl1000 < kl250, "KL(1000) >= KL(250)");
    }
    {
        auto x = tt::random_points(rng, 100, 10);
        for (std::size_t i = 50; i < 100; ++i) x(i, 0) += 20.0;
        auto y = tsne_project(x, TsneConfig{}).coords;
        double c[2][2] = {{0, 0}, {0, 0}}, spread = 0;
        for (std::size_t i = 0; i < 100; ++i) c[i / 50][0] += y(i, 0) / 50, c[i / 50][1] += y(i, 1) / 50;
        for (std::size_t i = 0; i < 100; ++i) spread += std::hypot(y(i, 0) - c[i / 50][0], y(i, 1) - c[i / 50][1]) / 100;
        const double gap = std::hypot(c[0][0] - c[1][0], c[0][1] - c[1][1]);
        o.require(gap > kBlobSeparation * spread, "blob gap " + format_double(gap / spread) + "x spread");
    }
    if (o.pass) o.detail = "P symmetric/normalised/calibrated, gradient check, KL decreases, blobs separate";
    return o;
}

Outcome ac6_statistics() {
    Outcome o;
    std::vector<std::size_t> a, b;
    const std::size_t table[2][2] = {{20, 5}, {10, 15}};
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t c = 0; c < table[i][j]; ++c) a.push_back(i), b.push_back(j);
    o.require(cohen_kappa(a, b) == 0.4, "kappa != 0.4");
    std::mt19937_64 rng(606);
    std::normal_distribution<double> g;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x(1 + uniform_index(rng, 60)), y(1 + uniform_index(rng, 60));
        for (auto& v : x) v = std::round(g(rng) * 8) / 8;
        for (auto& v : y) v = std::round((g(rng) + 0.5) * 8) / 8;
        o.require(std::abs(ks_two_sample(x, y).statistic - tt::brute_force_ks(x, y)) <= kKsTol, "KS D differs from brute force");
    }
    auto same = ks_two_sample({1, 2, 3}, {3, 2, 1});
    o.require(same.statistic == 0.0 && same.p_value == 1.0, "identical samples not D=0, p=1");
    o.require(ks_two_sample({0, 0}, {1, 1}).statistic == 1.0, "disjoint samples not D=1");
    if (o.pass) o.detail = "kappa exact, 100 KS pairs match brute force, boundaries exact";
    return o;
}

Outcome ac7_trend_math() {
    Outcome o;
    std::vector<std::int64_t> s1{0, 100}, s2{0, 50, 200};
    o.require(growth_rate(s1).ols_slope == 100.0 && growth_rate(s2).ols_slope == 100.0, "hand OLS slopes");
    o.require(growth_rate(s2).endpoint_delta == 200, "endpoint delta");
    std::mt19937_64 rng(707);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::int64_t> y(2 + uniform_index(rng, 25));
        for (auto& v : y) v = static_cast<std::int64_t>(uniform_index(rng, 50'000'000));
        const double cf = tt::closed_form_slope(y);
        o.require(std::abs(growth_rate(y).ols_slope - cf) <= 1e-9 * std::max(1.0, std::abs(cf)), "OLS vs closed form");

        std::vector<GrantRecord> recs;
        std::vector<std::size_t> labels;
        std::int64_t total = 0;
        const std::size_t k = 1 + uniform_index(rng, 12);
        for (std::size_t i = 0, n = uniform_index(rng, 500); i < n; ++i) {
            const auto amt = static_cast<std::int64_t>(uniform_index(rng, 3'000'000'000ULL));
            recs.push_back(tt::make_record(std::to_string(i), "x", 2000 + static_cast<int>(uniform_index(rng, 21)), amt));
            labels.push_back(uniform_index(rng, k));
            total += amt;
        }
        std::int64_t sum = 0;
        for (auto& row : annual_totals(recs, labels, k, YearRange{}))
            for (auto v : row) sum += v;
        o.require(sum == total, "dollar conservation");
    }
    std::vector<std::int64_t> late(21, 0), early(21, 0), always(21, 1);
    for (std::size_t y = 4; y < 21; ++y) late[y] = 7;
    for (std::size_t y = 0; y <= 10; ++y) early[y] = 7;
    std::vector<TrendReport> r(3);
    r[0].annual_totals = late, r[1].annual_totals = early, r[2].annual_totals = always;
    emergence_extinction(r, YearRange{});
    o.require(r[0].emerged && *r[0].first_funded_year == 2004 && !r[0].extinct, "emerged 2004");
    o.require(r[1].extinct && *r[1].last_funded_year == 2010 && !r[1].emerged, "extinct after 2010");
    o.require(!r[2].emerged && !r[2].extinct, "always funded");
    if (o.pass) o.detail = "hand slopes exact, 100 conservation instances, lifespans match";
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome ac8_determinism() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / "topictrend_acceptance";
    fs::remove_all(root);
    const std::string cli = TOPICTREND_CLI, config = TOPICTREND_DATA_DIR "/synthetic/pipeline.conf";
    auto run = [&](const std::string& name, int threads) {
        const auto dir = root / name;
        const std::string cmd = "\"" + cli + "\" --config \"" + config + "\" --out-dir \"" + dir.string() +
                                "\" --threads " + std::to_string(threads) + " run > \"" + (root / (name + ".log")).string() + "\" 2>&1";
        fs::create_directories(root);
        o.require(std::system(cmd.c_str()) == 0, "run " + name + " failed");
        return slurp(dir / "manifest.json");
    };
    const auto a = run("first", 1), b = run("second", 1), c = run("threads8", 8);
    o.require(!a.empty(), "manifest missing");
    o.require(a == b, "manifests differ between identical runs");
    o.require(a == c, "manifests differ between --threads 1 and --threads 8");
    if (o.pass) {
        auto j = nlohmann::json::parse(a);
        o.detail = std::to_string(j["outputs"].size()) + " output digests identical across 3 runs";
        fs::remove_all(root);
    }
    return o;
}

Outcome ac9_quiz() {
    Outcome o;
    const std::size_t n = 6000, k = 15;
    std::mt19937_64 rng(909);
    ClusterModel model;
    model.k = k;
    model.centroids = Matrix(k, 2);
    std::vector<GrantRecord> recs;
    std::vector<ClusterSummary> summaries(k);
    for (std::size_t c = 0; c < k; ++c) summaries[c].label = c, summaries[c].top_tokens = {{"t" + std::to_string(c), 1.0}};
    for (std::size_t i = 0; i < n; ++i) {
        recs.push_back(tt::make_record("G" + std::to_string(100000 + i), "a"));
        model.assignments.push_back(i < k ? i : uniform_index(rng, k));
    }
    QuizParams p;
    p.n_items = 300;
    p.n_reviewers = 4;
    p.overlap_fraction = 0.25;
    p.seed = 42;
    auto plan = generate_quiz(model, summaries, recs, p);
    std::map<std::string, std::set<std::string>> reviewers;
    for (auto& s : plan.slots) reviewers[s.quiz_id].insert(s.reviewer_id);
    std::size_t dual = 0;
    for (auto& [q, r] : reviewers) dual += r.size() == 2;
    o.require(plan.items.size() == 300, "item count");
    o.require(plan.slots.size() == 400, std::to_string(plan.slots.size()) + " review slots");
    o.require(dual == 100 && plan.dual_reviewed == 100, std::to_string(dual) + " dual-reviewed items");
    std::map<std::string, std::size_t> label_of;
    for (std::size_t i = 0; i < n; ++i) label_of[recs[i].record_id] = model.assignments[i];
    for (const auto& item : plan.items) {
        std::set<std::size_t> opts;
        for (auto& op : item.options) opts.insert(op.cluster_label);
        o.require(item.options.size() == 5 && opts.size() == 5, "options not 5 distinct clusters");
        o.require(item.model_label() == label_of[item.record_id], "model assignment not among options");
    }
    std::ostringstream a, b;
    write_quiz_jsonl(a, plan);
    write_quiz_plan_csv(a, plan);
    auto again = generate_quiz(model, summaries, recs, p);
    write_quiz_jsonl(b, again);
    write_quiz_plan_csv(b, again);
    o.require(a.str() == b.str(), "plan not reproducible");
    if (o.pass) o.detail = "300 items, 400 slots, 100 dual-reviewed, 5 distinct options, bitwise reproducible";
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* id;
        const char* name;
        double limit_seconds;
        std::function<Outcome()> run;
    };
    const Criterion criteria[] = {
        {"AC1", "clustering oracle equivalence", 10, ac1_clustering_oracles},
        {"AC2", "Lloyd monotonicity and local optimality", 30, ac2_lloyd_properties},
        {"AC3", "planted-topic recovery", 60, ac3_planted_topics},
        {"AC4", "metric oracles", 1e9, ac4_metric_oracles},
        {"AC5", "t-SNE checks", 120, ac5_tsne},
        {"AC6", "statistics oracles", 1e9, ac6_statistics},
        {"AC7", "trend math", 1e9, ac7_trend_math},
        {"AC8", "end-to-end determinism", 180, ac8_determinism},
        {"AC9", "quiz integrity", 1e9, ac9_quiz},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.limit_seconds) {
            o.pass = false;
            o.detail += " (runtime limit exceeded)";
        }
        failures += !o.pass;
        std::printf("[%s] %s %s: %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
    return failures == 0 ? 0 : 1;
}
