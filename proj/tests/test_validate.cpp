#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "support.hpp"
#include "topictrend/validate.hpp"

using namespace topictrend;
using tt_test::make_record;

namespace {

struct QuizFixture {
    ClusterModel model;
    std::vector<ClusterSummary> summaries;
    std::vector<GrantRecord> records;
};

QuizFixture quiz_fixture(std::size_t n, std::size_t k, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    QuizFixture f;
    f.model.k = k;
    f.model.centroids = Matrix(k, 2);
    for (std::size_t i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "G%05zu", i);
        f.records.push_back(make_record(id, "abstract " + std::to_string(i)));
        f.model.assignments.push_back(i < k ? i : uniform_index(rng, k));
    }
    for (std::size_t c = 0; c < k; ++c) {
        ClusterSummary s;
        s.label = c;
        s.top_tokens = {{"tok" + std::to_string(c), 1.0}, {"alt" + std::to_string(c), 0.5}};
        f.summaries.push_back(s);
    }
    return f;
}

}  // namespace

TEST(CohenKappa, HandWorkedTable) {
    // [[20, 5], [10, 15]]
    std::vector<std::size_t> a, b;
    auto add = [&](std::size_t x, std::size_t y, int n) {
        for (int i = 0; i < n; ++i) a.push_back(x), b.push_back(y);
    };
    add(0, 0, 20);
    add(0, 1, 5);
    add(1, 0, 10);
    add(1, 1, 15);
    EXPECT_EQ(cohen_kappa(a, b), 0.4);
    EXPECT_EQ(cohen_kappa(b, a), 0.4);
}

TEST(CohenKappa, IdentityAndDegenerate) {
    std::vector<std::size_t> s{0, 1, 2, 1, 0, 3};
    EXPECT_EQ(cohen_kappa(s, s), 1.0);
    std::vector<std::size_t> c(5, 2);
    EXPECT_THROW(cohen_kappa(c, c), ComputeError);
}

TEST(CohenKappa, SymmetricOnRandomSequences) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::size_t> a(50), b(50);
        for (auto& x : a) x = uniform_index(rng, 4);
        for (auto& x : b) x = uniform_index(rng, 4);
        EXPECT_EQ(cohen_kappa(a, b), cohen_kappa(b, a));
    }
}

TEST(KsTwoSample, BoundaryCases) {
    auto same = ks_two_sample({1, 2, 3}, {1, 2, 3});
    EXPECT_EQ(same.statistic, 0.0);
    EXPECT_EQ(same.p_value, 1.0);
    EXPECT_EQ(ks_two_sample({0, 0}, {1, 1}).statistic, 1.0);
    EXPECT_EQ(ks_two_sample({1, 2}, {1.5, 2.5}).statistic, 0.5);
}

TEST(KsTwoSample, MatchesBruteForceAndMonotoneInvariance) {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> g;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(1 + uniform_index(rng, 40)), b(1 + uniform_index(rng, 40));
        for (auto& x : a) x = std::round(g(rng) * 4) / 4;  // rounding forces ties
        for (auto& x : b) x = std::round((g(rng) + 0.3) * 4) / 4;
        const double d = ks_two_sample(a, b).statistic;
        EXPECT_NEAR(d, tt_test::brute_force_ks(a, b), 1e-12);
        std::vector<double> ea, eb;
        for (double x : a) ea.push_back(std::exp(x));
        for (double x : b) eb.push_back(std::exp(x));
        EXPECT_EQ(ks_two_sample(ea, eb).statistic, d);
    }
}

TEST(KsTwoSample, ShiftedSamplesSignificant) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> a(200), b(200);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng) + 1.0;
    auto r = ks_two_sample(a, b);
    EXPECT_GT(r.statistic, 0.2);
    EXPECT_LT(r.p_value, 1e-6);
}

TEST(GenerateQuiz, FiveClustersGiveAllOptions) {
    auto f = quiz_fixture(50, 5);
    QuizParams p;
    p.n_items = 20;
    auto plan = generate_quiz(f.model, f.summaries, f.records, p);
    for (const auto& item : plan.items) {
        std::set<std::size_t> opts;
        for (auto& o : item.options) opts.insert(o.cluster_label);
        EXPECT_EQ(opts, (std::set<std::size_t>{0, 1, 2, 3, 4}));
    }
}

TEST(GenerateQuiz, FourClustersRejected) {
    auto f = quiz_fixture(50, 4);
    try {
        generate_quiz(f.model, f.summaries, f.records, QuizParams{});
        FAIL();
    } catch (const ArgumentError& e) {
        EXPECT_STREQ(e.what(), "need >=5 clusters for 5-option quiz");
    }
}

TEST(GenerateQuiz, FullScalePlan) {
    auto f = quiz_fixture(6000, 15);
    QuizParams p;
    p.sample_fraction = 0.05;
    p.n_reviewers = 4;
    p.overlap_fraction = 0.25;
    p.seed = 7;
    auto plan = generate_quiz(f.model, f.summaries, f.records, p);
    EXPECT_EQ(plan.items.size(), 300u);
    EXPECT_EQ(plan.slots.size(), 400u);
    EXPECT_EQ(plan.dual_reviewed, 100u);
    std::map<std::string, std::set<std::string>> reviewers;
    for (auto& s : plan.slots) reviewers[s.quiz_id].insert(s.reviewer_id);
    std::size_t dual = 0;
    for (auto& [q, r] : reviewers) dual += r.size() == 2;
    EXPECT_EQ(dual, 100u);
    std::map<std::string, std::size_t> load;
    for (auto& s : plan.slots) ++load[s.reviewer_id];
    for (auto& [r, n] : load) EXPECT_EQ(n, 100u);
    for (const auto& item : plan.items) {
        std::set<std::size_t> opts;
        for (auto& o : item.options) opts.insert(o.cluster_label);
        EXPECT_EQ(opts.size(), kQuizOptions);
        EXPECT_EQ(item.model_label(), f.model.assignments[std::stoul(item.record_id.substr(1))]);
    }
    EXPECT_EQ(generate_quiz(f.model, f.summaries, f.records, p), plan);
}

TEST(GenerateQuiz, InvariantToCorpusRowOrder) {
    auto f = quiz_fixture(200, 8);
    QuizParams p;
    p.n_items = 30;
    p.seed = 5;
    auto plan = generate_quiz(f.model, f.summaries, f.records, p);
    auto g = f;
    std::reverse(g.records.begin(), g.records.end());
    std::reverse(g.model.assignments.begin(), g.model.assignments.end());
    EXPECT_EQ(generate_quiz(g.model, g.summaries, g.records, p), plan);
    p.stratified = true;
    EXPECT_EQ(generate_quiz(f.model, f.summaries, f.records, p), generate_quiz(g.model, g.summaries, g.records, p));
}

TEST(GenerateQuiz, StratifiedVisitsEveryLargeCluster) {
    auto f = quiz_fixture(500, 10);
    QuizParams p;
    p.n_items = 50;
    p.stratified = true;
    auto plan = generate_quiz(f.model, f.summaries, f.records, p);
    EXPECT_EQ(plan.items.size(), 50u);
    EXPECT_TRUE(plan.unvisited_clusters.empty());
}

TEST(QuizFiles, RoundTrip) {
    auto f = quiz_fixture(40, 6);
    QuizParams p;
    p.n_items = 12;
    auto plan = generate_quiz(f.model, f.summaries, f.records, p);
    std::ostringstream form, key;
    write_quiz_jsonl(form, plan);
    write_quiz_key_csv(key, plan);
    EXPECT_EQ(form.str().find("answer_index"), std::string::npos);
    std::istringstream fi(form.str()), ki(key.str());
    EXPECT_EQ(read_quiz(fi, ki), plan.items);
}

TEST(ScoreAgreement, AllCorrectAndEmpty) {
    auto f = quiz_fixture(40, 6);
    QuizParams p;
    p.n_items = 10;
    auto plan = generate_quiz(f.model, f.summaries, f.records, p);
    std::vector<QuizResponse> responses;
    for (auto& s : plan.slots) {
        const auto& item = *std::find_if(plan.items.begin(), plan.items.end(), [&](auto& i) { return i.quiz_id == s.quiz_id; });
        responses.push_back({s.quiz_id, s.reviewer_id, item.answer_index});
    }
    auto rep = score_agreement(plan.items, responses, 6);
    EXPECT_EQ(rep.accuracy, 1.0);
    EXPECT_EQ(rep.responses, responses.size());
    EXPECT_THROW(score_agreement(plan.items, std::vector<QuizResponse>{}), ArgumentError);

    std::vector<std::string> ids;
    for (auto& r : f.records) ids.push_back(r.record_id);
    auto emb = Matrix(40, 2);
    auto split = distance_split_analysis(plan.items, responses, emb, ids, f.model);
    EXPECT_TRUE(split.degenerate);
    EXPECT_FALSE(split.ks);
}

TEST(DistanceSplit, WrongPicksFartherGiveSmallP) {
    // 1-D embeddings; one cluster at the origin. Correct picks on near
    // documents, wrong picks on far ones.
    const std::size_t n = 200;
    auto f = quiz_fixture(n, 5);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    Matrix emb(n, 2);
    f.model.centroids = Matrix(5, 2);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
        emb(i, 0) = i % 2 ? 2.0 + u(rng) : u(rng);
        ids.push_back(f.records[i].record_id);
    }
    QuizParams p;
    p.n_items = n;
    p.overlap_fraction = 0;
    auto plan = generate_quiz(f.model, f.summaries, f.records, p);
    std::vector<QuizResponse> responses;
    for (auto& item : plan.items) {
        const bool far = std::stoul(item.record_id.substr(1)) % 2 == 1;
        responses.push_back({item.quiz_id, "reviewer_1", far ? (item.answer_index + 1) % 5 : item.answer_index});
    }
    auto split = distance_split_analysis(plan.items, responses, emb, ids, f.model);
    ASSERT_FALSE(split.degenerate);
    EXPECT_GT(split.ks->statistic, 0.9);
    EXPECT_LT(split.ks->p_value, 1e-10);
    EXPECT_GT(split.wrong.mean, split.correct.mean);
}
