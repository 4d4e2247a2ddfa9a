// organseg: phantom corpus, training and two-step segmentation from the command line.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "organseg/errors.hpp"
#include "organseg/pipeline.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::string out = "out";
    std::optional<double> tau;
    std::optional<int> margin_v;
    std::optional<double> sigma_sq;
    std::optional<std::uint64_t> seed;
    bool gt_heatmaps = false;
    std::string predictor;
};

organseg::PipelineConfig effective_config(const Overrides& o) {
    auto config = o.config_path.empty() ? organseg::PipelineConfig{} : organseg::load_pipeline_config(o.config_path);
    if (o.tau) config.localization.tau = *o.tau;
    if (o.margin_v) config.localization.margin_v = *o.margin_v;
    if (o.sigma_sq) config.localization.sigma_sq = *o.sigma_sq;
    if (o.seed) config.seed = *o.seed;
    if (o.gt_heatmaps) config.localization.source = organseg::LocalizerSource::ground_truth_heatmaps;
    if (o.predictor == "oracle") config.segmentation.predictor = organseg::PredictorKind::oracle;
    if (o.predictor == "trained") config.segmentation.predictor = organseg::PredictorKind::trained;
    config.validate();
    return config;
}

void print_training(const char* what, const organseg::TrainingReport& r) {
    std::printf("%s: %zu samples, %zu steps%s, loss %.6g -> %.6g\n", what, r.samples, r.result.trace.size(),
                r.result.stopped_on_plateau ? " (plateau)" : "", r.initial_loss, r.final_loss);
}

void print_report(const organseg::DiceReport& report) {
    for (const auto& [id, s] : report.per_organ) {
        std::printf("organ %d: dice %.4f +- %.4f (n=%zu)\n", id, s.mean, s.stddev, s.count);
    }
    std::printf("global dice %.4f +- %.4f\n", report.global_mean, report.global_stddev);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-step organ segmentation on synthetic CT phantoms"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config_path, "JSON pipeline configuration")->check(CLI::ExistingFile);
    app.add_option("--out", o.out, "Output directory")->capture_default_str();
    app.add_option("--tau", o.tau, "Heatmap threshold for centroid extraction");
    app.add_option("--margin-v", o.margin_v, "Box margin in localization-grid voxels");
    app.add_option("--sigma-sq", o.sigma_sq, "Heatmap variance in mm^2");
    app.add_option("--seed", o.seed, "Master seed");

    auto* phantom = app.add_subcommand("phantom", "Generate the phantom corpus and manifest");
    auto* stats = app.add_subcommand("stats", "Organ box statistics over the train split");
    auto* train_loc = app.add_subcommand("train-localizer", "Train the heatmap regressor");
    auto* train_seg = app.add_subcommand("train-segmenter", "Train one organ's segmenter");
    int organ_id = 0;
    train_seg->add_option("--organ", organ_id, "Organ id")->required();
    auto* run = app.add_subcommand("run", "Localize, segment and aggregate the test split");
    bool resume = false;
    run->add_flag("--resume", resume, "Reuse existing per-volume localization files");
    run->add_flag("--gt-heatmaps", o.gt_heatmaps, "Localize from heatmaps synthesized from true centroids");
    run->add_option("--predictor", o.predictor, "Organ predictor")->check(CLI::IsMember({"oracle", "trained"}));
    auto* evaluate = app.add_subcommand("evaluate", "Dice of existing run outputs against the truth");
    auto* baseline = app.add_subcommand("baseline", "Train and evaluate the single whole-volume network");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const auto config = effective_config(o);
        const auto ws = organseg::Workspace::resolve(config, o.out);
        if (phantom->parsed()) {
            const auto m = organseg::cmd_phantom(config, ws);
            std::printf("corpus: %zu volumes (%zu train, %zu test) in %s\n", m.members.size(),
                        m.split(organseg::kTrainSplit).size(), m.split(organseg::kTestSplit).size(),
                        m.root.string().c_str());
        } else if (stats->parsed()) {
            const auto s = organseg::cmd_stats(config, ws);
            for (const auto& [id, st] : s.organs) {
                std::printf("organ %d: mean size %.2f x %.2f x %.2f mm over %zu volumes\n", id, st.mean_size_mm[0],
                            st.mean_size_mm[1], st.mean_size_mm[2], st.count);
            }
        } else if (train_loc->parsed()) {
            print_training("localizer", organseg::cmd_train_localizer(config, ws));
        } else if (train_seg->parsed()) {
            print_training(("segmenter " + std::to_string(organ_id)).c_str(),
                           organseg::cmd_train_segmenter(config, ws, organ_id));
        } else if (run->parsed()) {
            const auto s = organseg::cmd_run(config, ws, {resume});
            std::printf("%zu volumes, %zu failed, %zu organs not localized\n", s.volumes, s.failures.size(),
                        s.localization_misses);
            for (const auto& f : s.failures) std::fprintf(stderr, "organseg: %s: %s\n", f.volume.c_str(), f.error.c_str());
            print_report(s.report);
        } else if (evaluate->parsed()) {
            print_report(organseg::cmd_evaluate(config, ws));
        } else if (baseline->parsed()) {
            const auto s = organseg::cmd_baseline(config, ws);
            print_training("baseline", s.training);
            print_report(s.report);
        }
    } catch (const organseg::InvalidArgument& e) {
        std::fprintf(stderr, "organseg: error: %s\n", e.what());
        return 1;
    } catch (const organseg::MissingStatistics& e) {
        std::fprintf(stderr, "organseg: error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "organseg: error: %s\n", e.what());
        return 2;
    }
    return 0;
}
