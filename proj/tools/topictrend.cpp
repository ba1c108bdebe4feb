#include <iostream>

#include <CLI11.hpp>

#include "topictrend/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Topic clustering and funding-trend analysis for grant abstracts"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
    std::string out_dir;
    app.add_option("--config", config_path, "Pipeline config file")->required()->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--threads", threads, "Worker thread cap (0 = hardware concurrency)");
    app.add_option("--out-dir", out_dir, "Override the output directory");

    auto* filter = app.add_subcommand("filter", "Apply the inclusion funnel");
    auto* tfidf = app.add_subcommand("tfidf", "Build vocabulary and IDF weights");
    auto* embed = app.add_subcommand("embed", "Embed documents as TF-IDF weighted word-vector means");
    auto* cluster = app.add_subcommand("cluster", "Fit hierarchy-seeded k-means for each configured k");
    auto* sweep = app.add_subcommand("sweep", "Inertia and silhouette over a range of k");
    auto* project = app.add_subcommand("project", "2-D t-SNE projection and scatter plots");
    bool grid = false;
    project->add_flag("--grid", grid, "Run the perplexity x learning-rate grid instead");
    auto* summarize = app.add_subcommand("summarize", "Top tokens and nearest documents per cluster");
    auto* trends = app.add_subcommand("trends", "Annual funding, growth ranking and quadrant analysis");
    auto* quiz = app.add_subcommand("quiz", "Generate the topic-assignment quiz");
    auto* score = app.add_subcommand("score", "Score reviewer responses against the model");
    std::string responses;
    std::size_t score_k = 0;
    score->add_option("--responses", responses, "Responses CSV (quiz_id,reviewer_id,choice)")->required();
    score->add_option("--k", score_k, "Cluster count of the quiz being scored")->required();
    auto* run = app.add_subcommand("run", "Run every stage and write manifest.json");

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = topictrend::PipelineConfig::load(config_path);
        if (seed) cfg.set("seed", std::to_string(*seed), {});
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.validate();
        topictrend::set_max_threads(threads);

        topictrend::Pipeline p(std::move(cfg));
        if (filter->parsed()) p.filter();
        else if (tfidf->parsed()) p.tfidf();
        else if (embed->parsed()) p.embed();
        else if (cluster->parsed()) p.cluster();
        else if (sweep->parsed()) p.sweep();
        else if (project->parsed()) p.project(grid);
        else if (summarize->parsed()) p.summarize();
        else if (trends->parsed()) p.trends();
        else if (quiz->parsed()) p.quiz();
        else if (score->parsed()) p.score(score_k, responses);
        else if (run->parsed()) {
            const auto m = p.run();
            std::cerr << "wrote " << m.outputs.size() << " outputs; config " << m.config_hash.substr(0, 12) << '\n';
        }
    } catch (const topictrend::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
