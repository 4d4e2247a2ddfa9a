#include "organseg/pipeline.hpp"

#include <algorithm>
#include <memory>

#include "json_util.hpp"
#include "organseg/errors.hpp"
#include "organseg/random.hpp"
#include "organseg/volume_io.hpp"

namespace organseg {

using detail::json;
namespace fs = std::filesystem;

namespace {

// Stream indices under the config seed.
constexpr std::uint64_t kLocalizerInitStream = 1;
constexpr std::uint64_t kLocalizerTrainStream = 2;
constexpr std::uint64_t kSegmenterInitStream = 1000;
constexpr std::uint64_t kSegmenterTrainStream = 2000;
constexpr std::uint64_t kBaselineInitStream = 3000;
constexpr std::uint64_t kBaselineTrainStream = 3001;

Vec3 iso(double s) { return {s, s, s}; }

void write_run_config(const PipelineConfig& config, const Workspace& ws) {
    detail::write_text_file(ws.out / "run_config.json", pipeline_config_to_json(config));
}

CorpusOptions corpus_options(const PipelineConfig& config) {
    CorpusOptions o;
    o.n_volumes = config.corpus.n_volumes;
    o.n_train = config.corpus.n_train;
    o.templ = config.corpus.templ;
    o.jitter = config.corpus.jitter;
    o.seed = config.seed;
    return o;
}

const OrganInfo& require_organ(const OrganCatalog& catalog, int organ_id) {
    const auto* organ = find_organ(catalog, organ_id);
    if (!organ) throw InvalidArgument("organ id " + std::to_string(organ_id) + " is not in the catalog");
    return *organ;
}

std::optional<Vec3> true_centroid(const CentroidSet& centroids, int organ_id) {
    for (const auto& c : centroids) {
        if (c.id == organ_id) return c.centroid_mm;
    }
    return std::nullopt;
}

GridSpec localization_grid_of(const PreparedVolume& v) { return v.localization_input.grid(); }

LocalizationOptions localization_options(const PipelineConfig& config) {
    return {config.localization.tau, config.localization.margin_v, config.localization.centroid_mode};
}

TrainingReport run_training(const ConvNetParams& init, const std::vector<TrainingSample>& samples, LossKind loss,
                            const TrainConfig& tc) {
    if (samples.empty()) throw InvalidArgument("no training samples");
    TrainingReport report;
    report.samples = samples.size();
    report.initial_loss = dataset_loss(init, samples, loss);
    report.result = train(init, samples, loss, tc);
    report.final_loss = dataset_loss(report.result.params, samples, loss);
    return report;
}

void save_training(const TrainingReport& report, const fs::path& checkpoint, const std::string& task) {
    write_checkpoint(checkpoint, {report.result.params, report.result.trace.size(), task});
    auto trace = checkpoint;
    trace.replace_extension(".loss.csv");
    write_loss_trace(trace, report.result.trace);
}

void write_failures(const fs::path& path, const std::vector<VolumeFailure>& failures) {
    json arr = json::array();
    for (const auto& f : failures) arr.push_back({{"volume", f.volume}, {"error", f.error}});
    detail::write_json_file(path, {{"failures", arr}});
}

DiceReport evaluate_and_write(const std::vector<std::pair<std::string, Volume3D>>& predictions,
                              const std::vector<Volume3D>& truths, const OrganCatalog& catalog,
                              const PipelineConfig& config, const fs::path& dir) {
    std::vector<NamedLabelMap> pred_refs;
    std::vector<NamedLabelMap> truth_refs;
    for (std::size_t n = 0; n < predictions.size(); ++n) {
        pred_refs.push_back({predictions[n].first, &predictions[n].second});
        truth_refs.push_back({predictions[n].first, &truths[n]});
    }
    auto report = evaluate_corpus(pred_refs, truth_refs, catalog, config.dice_aggregation);
    write_dice_report(dir / "dice_report.json", report, catalog);
    write_dice_csv(dir / "dice_per_case.csv", report);
    return report;
}

}  // namespace

Workspace Workspace::resolve(const PipelineConfig& config, const fs::path& out) {
    Workspace ws;
    ws.out = out;
    ws.corpus = config.paths.corpus.empty() ? out / "corpus" : fs::path(config.paths.corpus);
    ws.stats = config.paths.stats.empty() ? out / "organ_stats.json" : fs::path(config.paths.stats);
    ws.models = config.paths.models.empty() ? out / "models" : fs::path(config.paths.models);
    ws.run = out / "run";
    ws.baseline = out / "baseline";
    return ws;
}

PreparedVolume prepare_volume(const Manifest& manifest, const ManifestMember& member, const PipelineConfig& config) {
    PreparedVolume v;
    v.name = member.name;
    const auto image = read_volume(manifest.resolve(member.image));
    const auto labels = read_volume(manifest.resolve(member.labels));
    if (!same_grid(image.grid(), labels.grid())) {
        throw InvalidArgument("image and labels of " + member.name + " are on different grids");
    }
    v.centroids = read_centroids(manifest.resolve(member.centroids));
    v.localization_input =
        normalize(resample(image, iso(config.localization.grid_spacing), Interpolation::trilinear));
    const auto seg = resample(image, iso(config.segmentation.grid_spacing), Interpolation::trilinear);
    v.segmentation_norm = normalization_stats(seg);
    v.segmentation_input = apply_normalization(seg, v.segmentation_norm);
    v.truth_labels = resample(labels, iso(config.segmentation.grid_spacing), Interpolation::nearest);
    return v;
}

HeatmapStack predict_heatmaps(const ConvNetParams& localizer, const Volume3D& input, const OrganCatalog& catalog,
                              double sigma_sq) {
    if (localizer.output_channels() != static_cast<int>(catalog.size())) {
        throw InvalidArgument("localizer has " + std::to_string(localizer.output_channels()) + " outputs for " +
                              std::to_string(catalog.size()) + " organs");
    }
    HeatmapStack stack;
    stack.sigma_sq = sigma_sq;
    stack.channels = forward(localizer, input, VolumeKind::heatmap);
    for (const auto& organ : catalog) stack.organ_ids.push_back(organ.id);
    return stack;
}

std::vector<TrainingSample> localizer_dataset(const Manifest& manifest, const PipelineConfig& config) {
    std::vector<TrainingSample> out;
    for (const auto& member : manifest.split(kTrainSplit)) {
        const auto v = prepare_volume(manifest, member, config);
        auto heatmaps = synthesize_heatmaps(v.centroids, v.localization_input.grid(), config.localization.sigma_sq);
        out.push_back({v.localization_input, std::move(heatmaps.channels)});
    }
    return out;
}

std::vector<TrainingSample> segmenter_dataset(const Manifest& manifest, const PipelineConfig& config,
                                              const OrganStats& stats, int organ_id, const ConvNetParams* localizer) {
    require_organ(manifest.organs, organ_id);
    const bool predicted = config.segmentation.train_boxes == TrainBoxSource::predicted;
    if (predicted && !localizer) throw InvalidArgument("predicted training boxes need a localizer");
    std::vector<TrainingSample> out;
    for (const auto& member : manifest.split(kTrainSplit)) {
        const auto v = prepare_volume(manifest, member, config);
        std::optional<BoundingBox> box3;
        if (predicted) {
            const auto heat =
                predict_heatmaps(*localizer, v.localization_input, manifest.organs, config.localization.sigma_sq);
            const auto loc = localize_all(heat, stats, manifest.organs, localization_options(config));
            const auto* organ = loc.find(organ_id);
            if (organ && organ->box) box3 = organ->box;
        } else if (const auto c = true_centroid(v.centroids, organ_id)) {
            box3 = make_box(*c, stats, organ_id, config.localization.margin_v, localization_grid_of(v));
        }
        if (!box3) continue;
        const auto box = map_box(*box3, localization_grid_of(v), v.segmentation_input.grid());
        TrainingSample sample;
        sample.input = crop(v.segmentation_input, box, normalize_value(kAirHu, v.segmentation_norm));
        sample.targets.push_back(crop(binary_mask(v.truth_labels, organ_id), box, 0.0));
        out.push_back(std::move(sample));
    }
    return out;
}

Manifest cmd_phantom(const PipelineConfig& config, const Workspace& ws) {
    config.validate();
    auto manifest = generate_corpus(corpus_options(config), ws.corpus);
    write_run_config(config, ws);
    return manifest;
}

OrganStats cmd_stats(const PipelineConfig& config, const Workspace& ws) {
    config.validate();
    const auto manifest = read_manifest(ws.corpus);
    const auto train = manifest.split(kTrainSplit);
    if (train.empty()) throw InvalidArgument("train split of " + manifest.root.string() + " is empty");
    std::vector<Volume3D> labels;
    labels.reserve(train.size());
    for (const auto& member : train) labels.push_back(read_volume(manifest.resolve(member.labels)));
    auto stats = compute_organ_stats(labels, manifest.organs);
    write_organ_stats(ws.stats, stats);
    write_run_config(config, ws);
    return stats;
}

TrainingReport cmd_train_localizer(const PipelineConfig& config, const Workspace& ws) {
    config.validate();
    const auto manifest = read_manifest(ws.corpus);
    const auto samples = localizer_dataset(manifest, config);
    const NetShape shape{config.model.hidden_layers, config.model.channels, static_cast<int>(manifest.organs.size())};
    const auto init = make_conv_net(shape, derive_seed(config.seed, kLocalizerInitStream));
    auto tc = config.training.localizer;
    tc.seed = derive_seed(config.seed, kLocalizerTrainStream);
    auto report = run_training(init, samples, LossKind::l2, tc);
    save_training(report, ws.localizer_checkpoint(), "localizer");
    write_run_config(config, ws);
    return report;
}

TrainingReport cmd_train_segmenter(const PipelineConfig& config, const Workspace& ws, int organ_id) {
    config.validate();
    const auto manifest = read_manifest(ws.corpus);
    require_organ(manifest.organs, organ_id);
    const auto stats = read_organ_stats(ws.stats);
    std::optional<ConvNetParams> localizer;
    if (config.segmentation.train_boxes == TrainBoxSource::predicted) {
        localizer = read_checkpoint(ws.localizer_checkpoint()).params;
    }
    const auto samples = segmenter_dataset(manifest, config, stats, organ_id, localizer ? &*localizer : nullptr);
    const NetShape shape{config.model.hidden_layers, config.model.channels, 1};
    const auto id = static_cast<std::uint64_t>(organ_id);
    const auto init = make_conv_net(shape, derive_seed(config.seed, kSegmenterInitStream + id));
    auto tc = config.training.segmenter;
    tc.seed = derive_seed(config.seed, kSegmenterTrainStream + id);
    auto report = run_training(init, samples, LossKind::ce_dice, tc);
    save_training(report, ws.segmenter_checkpoint(organ_id), "segmenter_" + std::to_string(organ_id));
    write_run_config(config, ws);
    return report;
}

RunSummary cmd_run(const PipelineConfig& config, const Workspace& ws, const RunOptions& options) {
    config.validate();
    const auto manifest = read_manifest(ws.corpus);
    const auto stats = read_organ_stats(ws.stats);
    const auto& catalog = manifest.organs;

    std::optional<ConvNetParams> localizer;
    if (config.localization.source == LocalizerSource::trained) {
        localizer = read_checkpoint(ws.localizer_checkpoint()).params;
    }
    std::map<int, std::unique_ptr<ConvNetPredictor>> trained;
    if (config.segmentation.predictor == PredictorKind::trained) {
        for (const auto& organ : catalog) {
            trained[organ.id] = std::make_unique<ConvNetPredictor>(
                read_checkpoint(ws.segmenter_checkpoint(organ.id)).params, "segmenter_" + std::to_string(organ.id));
        }
    }

    RunSummary summary;
    std::vector<std::pair<std::string, Volume3D>> predictions;
    std::vector<Volume3D> truths;
    fs::create_directories(ws.run);
    for (const auto& member : manifest.split(kTestSplit)) {
        ++summary.volumes;
        try {
            const auto v = prepare_volume(manifest, member, config);
            const auto loc_path = ws.run / (member.name + ".localization.json");
            LocalizationResult loc;
            if (options.resume_localization && fs::exists(loc_path)) {
                loc = read_localization(loc_path);
            } else {
                const auto heat =
                    localizer ? predict_heatmaps(*localizer, v.localization_input, catalog, config.localization.sigma_sq)
                              : synthesize_heatmaps(v.centroids, v.localization_input.grid(),
                                                    config.localization.sigma_sq);
                loc = localize_all(heat, stats, catalog, localization_options(config));
                write_localization(loc_path, loc);
            }
            if (!same_grid(loc.grid, v.localization_input.grid())) {
                throw InvalidArgument("localization grid of " + member.name + " does not match the volume");
            }

            CropSet crops;
            crops.target = v.segmentation_input.grid();
            const double pad = normalize_value(kAirHu, v.segmentation_norm);
            for (const auto& organ : catalog) {
                const auto* found = loc.find(organ.id);
                if (!found || found->status != OrganStatus::found || !found->box) {
                    if (true_centroid(v.centroids, organ.id)) ++summary.localization_misses;
                    continue;
                }
                const auto box = map_box(*found->box, loc.grid, crops.target);
                if (config.segmentation.predictor == PredictorKind::oracle) {
                    const OracleIntensityPredictor predictor(organ.intensity, config.segmentation.oracle,
                                                             v.segmentation_norm);
                    crops.crops.push_back(segment_organ(predictor, v.segmentation_input, box, organ.id, pad));
                } else {
                    crops.crops.push_back(segment_organ(*trained.at(organ.id), v.segmentation_input, box, organ.id, pad));
                }
            }
            auto result = aggregate(crops, config.segmentation.decision_threshold);

            for (const auto& c : crops.crops) {
                write_volume(ws.run / (member.name + ".crop_" + std::to_string(c.organ_id) + ".prob"), c.probability,
                             CropAnnotation{c.organ_id, c.box});
            }
            write_volume(ws.run / (member.name + ".labels.lbl"), result.labels);
            write_volume(ws.run / (member.name + ".winprob.img"), result.winning_probability);
            write_aggregation_report(ws.run / (member.name + ".aggregation_report.json"), result.stats);

            predictions.emplace_back(member.name, std::move(result.labels));
            truths.push_back(v.truth_labels);
        } catch (const std::exception& e) {
            summary.failures.push_back({member.name, e.what()});
        }
    }

    summary.report = evaluate_and_write(predictions, truths, catalog, config, ws.run);
    write_failures(ws.run / "failures.json", summary.failures);
    detail::write_json_file(ws.run / "run_summary.json",
                            {{"volumes", summary.volumes},
                             {"failures", summary.failures.size()},
                             {"localization_misses", summary.localization_misses},
                             {"global_dice_mean", summary.report.global_mean},
                             {"global_dice_stddev", summary.report.global_stddev}});
    write_run_config(config, ws);
    return summary;
}

DiceReport cmd_evaluate(const PipelineConfig& config, const Workspace& ws) {
    config.validate();
    const auto manifest = read_manifest(ws.corpus);
    std::vector<std::pair<std::string, Volume3D>> predictions;
    std::vector<Volume3D> truths;
    for (const auto& member : manifest.split(kTestSplit)) {
        const auto pred_path = ws.run / (member.name + ".labels.lbl");
        if (!fs::exists(pred_path)) continue;  // failed in run; listed in failures.json
        auto pred = read_volume(pred_path);
        const auto labels = read_volume(manifest.resolve(member.labels));
        truths.push_back(resample(labels, iso(config.segmentation.grid_spacing), Interpolation::nearest));
        predictions.emplace_back(member.name, std::move(pred));
    }
    auto report = evaluate_and_write(predictions, truths, manifest.organs, config, ws.run);
    write_run_config(config, ws);
    return report;
}

BaselineSummary cmd_baseline(const PipelineConfig& config, const Workspace& ws) {
    config.validate();
    const auto manifest = read_manifest(ws.corpus);
    const auto& catalog = manifest.organs;

    std::vector<TrainingSample> samples;
    for (const auto& member : manifest.split(kTrainSplit)) {
        const auto v = prepare_volume(manifest, member, config);
        TrainingSample s{v.segmentation_input, {}};
        for (const auto& organ : catalog) s.targets.push_back(binary_mask(v.truth_labels, organ.id));
        samples.push_back(std::move(s));
    }
    const NetShape shape{config.model.hidden_layers, config.model.channels, static_cast<int>(catalog.size())};
    const auto init = make_conv_net(shape, derive_seed(config.seed, kBaselineInitStream));
    auto tc = config.training.segmenter;
    tc.seed = derive_seed(config.seed, kBaselineTrainStream);

    BaselineSummary summary;
    summary.training = run_training(init, samples, LossKind::ce_dice, tc);
    samples.clear();
    save_training(summary.training, ws.baseline / "baseline.ckpt", "baseline");

    std::vector<std::pair<std::string, Volume3D>> predictions;
    std::vector<Volume3D> truths;
    for (const auto& member : manifest.split(kTestSplit)) {
        const auto v = prepare_volume(manifest, member, config);
        const auto outputs = forward(summary.training.result.params, v.segmentation_input);
        CropSet crops;
        crops.target = v.segmentation_input.grid();
        for (std::size_t n = 0; n < catalog.size(); ++n) {
            crops.crops.push_back({catalog[n].id, outputs[n], full_box(crops.target)});
        }
        auto result = aggregate(crops, config.segmentation.decision_threshold);
        write_volume(ws.baseline / (member.name + ".labels.lbl"), result.labels);
        predictions.emplace_back(member.name, std::move(result.labels));
        truths.push_back(v.truth_labels);
    }
    summary.report = evaluate_and_write(predictions, truths, catalog, config, ws.baseline);
    write_run_config(config, ws);
    return summary;
}

}  // namespace organseg
