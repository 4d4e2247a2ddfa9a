#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "organseg/aggregation.hpp"
#include "organseg/dataset.hpp"
#include "organseg/localization.hpp"
#include "organseg/metrics.hpp"
#include "organseg/phantom.hpp"
#include "organseg/segmentation.hpp"
#include "organseg/tiny_model.hpp"

namespace organseg {

enum class LocalizerSource {
    trained,                // forward pass of models/localizer.ckpt
    ground_truth_heatmaps,  // debug path: heatmaps synthesized from the true centroids
};

enum class PredictorKind { oracle, trained };
enum class TrainBoxSource { ground_truth, predicted };

struct PipelineConfig {
    std::uint64_t seed = 42;

    // Empty means the default location under the output directory.
    struct Paths {
        std::string corpus;  // <out>/corpus
        std::string stats;   // <out>/organ_stats.json
        std::string models;  // <out>/models
    } paths;

    struct Corpus {
        std::size_t n_volumes = 10;
        std::size_t n_train = 7;
        Jitter jitter{2.0, 0.1};
        PhantomSpec templ = default_phantom_template();
    } corpus;

    struct Localization {
        double sigma_sq = kDefaultSigmaSq;
        double tau = kDefaultTau;
        int margin_v = kDefaultMarginVoxels;
        double grid_spacing = 3.0;
        CentroidMode centroid_mode = CentroidMode::voxel_mean;
        LocalizerSource source = LocalizerSource::trained;
    } localization;

    struct Segmentation {
        double grid_spacing = 1.0;
        double decision_threshold = kDefaultDecisionThreshold;
        PredictorKind predictor = PredictorKind::oracle;
        OracleIntensityPredictor::Options oracle;
        TrainBoxSource train_boxes = TrainBoxSource::ground_truth;
    } segmentation;

    struct Model {
        int hidden_layers = 2;
        int channels = 8;
    } model;

    struct Training {
        TrainConfig localizer = regression_train_config();
        TrainConfig segmenter = segmentation_train_config();
    } training;

    GlobalAggregation dice_aggregation = GlobalAggregation::volume_organ;

    void validate() const;
};

// JSON round trip. Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json(const PipelineConfig& config);

// Resolved artifact locations for one output directory.
struct Workspace {
    std::filesystem::path out;
    std::filesystem::path corpus;
    std::filesystem::path stats;
    std::filesystem::path models;
    std::filesystem::path run;
    std::filesystem::path baseline;

    static Workspace resolve(const PipelineConfig& config, const std::filesystem::path& out);
    std::filesystem::path localizer_checkpoint() const { return models / "localizer.ckpt"; }
    std::filesystem::path segmenter_checkpoint(int organ_id) const {
        return models / ("segmenter_" + std::to_string(organ_id) + ".ckpt");
    }
};

// One test/train member loaded and brought onto both working grids.
struct PreparedVolume {
    std::string name;
    Volume3D localization_input;  // resampled to the localization grid, normalised
    Volume3D segmentation_input;  // resampled to the segmentation grid, normalised
    NormalizationStats segmentation_norm;
    Volume3D truth_labels;        // on the segmentation grid (nearest)
    CentroidSet centroids;
};

PreparedVolume prepare_volume(const Manifest& manifest, const ManifestMember& member, const PipelineConfig& config);

// Localizer forward pass packed as a heatmap stack with the catalog's organ ids.
HeatmapStack predict_heatmaps(const ConvNetParams& localizer, const Volume3D& input, const OrganCatalog& catalog,
                              double sigma_sq);

std::vector<TrainingSample> localizer_dataset(const Manifest& manifest, const PipelineConfig& config);
std::vector<TrainingSample> segmenter_dataset(const Manifest& manifest, const PipelineConfig& config,
                                              const OrganStats& stats, int organ_id,
                                              const ConvNetParams* localizer = nullptr);

struct TrainingReport {
    TrainResult result;
    double initial_loss = 0.0;  // dataset loss before the first step
    double final_loss = 0.0;    // dataset loss of the returned parameters
    std::size_t samples = 0;
};

// Each command writes <out>/run_config.json with the effective configuration.
Manifest cmd_phantom(const PipelineConfig& config, const Workspace& ws);
OrganStats cmd_stats(const PipelineConfig& config, const Workspace& ws);
TrainingReport cmd_train_localizer(const PipelineConfig& config, const Workspace& ws);
TrainingReport cmd_train_segmenter(const PipelineConfig& config, const Workspace& ws, int organ_id);

struct VolumeFailure {
    std::string volume;
    std::string error;
};

struct RunOptions {
    bool resume_localization = false;  // reuse <run>/<vol>.localization.json when present
};

struct RunSummary {
    DiceReport report;
    std::vector<VolumeFailure> failures;
    std::size_t volumes = 0;
    std::size_t localization_misses = 0;  // organs in the truth that localization reported absent
};

RunSummary cmd_run(const PipelineConfig& config, const Workspace& ws, const RunOptions& options = {});
DiceReport cmd_evaluate(const PipelineConfig& config, const Workspace& ws);

// Single network segmenting every organ on the whole segmentation-grid volume, same net shape and
// segmenter training config as the organ-wise models; evaluated on the test split.
struct BaselineSummary {
    TrainingReport training;
    DiceReport report;
};
BaselineSummary cmd_baseline(const PipelineConfig& config, const Workspace& ws);

}  // namespace organseg
