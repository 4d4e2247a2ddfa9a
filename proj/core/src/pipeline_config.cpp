#include <initializer_list>
#include <set>

#include "json_util.hpp"
#include "organseg/errors.hpp"
#include "organseg/pipeline.hpp"

namespace organseg {

using detail::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw InvalidArgument("config section '" + where + "' must be an object");
    const std::set<std::string> names(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items()) {
        if (!names.count(key)) throw InvalidArgument("unknown config key '" + where + "." + key + "'");
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& dst) {
    if (obj.contains(key)) dst = obj.at(key).get<T>();
}

json train_to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"decay_factor", c.decay_factor},
            {"decay_every", c.decay_every},     {"max_steps", c.max_steps},
            {"batch_size", c.batch_size},       {"plateau_window", c.plateau_window},
            {"plateau_tolerance", c.plateau_tolerance}, {"beta1", c.beta1},
            {"beta2", c.beta2},                 {"epsilon", c.epsilon}};
}

void train_from_json(const json& j, TrainConfig& c, const std::string& where) {
    reject_unknown(j,
                   {"learning_rate", "decay_factor", "decay_every", "max_steps", "batch_size", "plateau_window",
                    "plateau_tolerance", "beta1", "beta2", "epsilon"},
                   where);
    read_field(j, "learning_rate", c.learning_rate);
    read_field(j, "decay_factor", c.decay_factor);
    read_field(j, "decay_every", c.decay_every);
    read_field(j, "max_steps", c.max_steps);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "plateau_window", c.plateau_window);
    read_field(j, "plateau_tolerance", c.plateau_tolerance);
    read_field(j, "beta1", c.beta1);
    read_field(j, "beta2", c.beta2);
    read_field(j, "epsilon", c.epsilon);
}

json template_to_json(const PhantomSpec& s) {
    json organs = json::array();
    for (const auto& o : s.organs) {
        organs.push_back({{"id", o.id},
                          {"name", o.name},
                          {"center_mm", detail::to_json(o.center_mm)},
                          {"semi_axes_mm", detail::to_json(o.semi_axes_mm)},
                          {"intensity", o.intensity}});
    }
    return {{"dims", detail::to_json(s.canvas.dims)},
            {"spacing", detail::to_json(s.canvas.spacing)},
            {"origin", detail::to_json(s.canvas.origin)},
            {"background", s.background},
            {"noise_sigma", s.noise_sigma},
            {"organs", organs}};
}

void template_from_json(const json& j, PhantomSpec& s) {
    reject_unknown(j, {"dims", "spacing", "origin", "background", "noise_sigma", "organs"}, "corpus.template");
    if (j.contains("dims")) s.canvas.dims = detail::index3_from_json(j.at("dims"), "dims");
    if (j.contains("spacing")) s.canvas.spacing = detail::vec3_from_json(j.at("spacing"), "spacing");
    if (j.contains("origin")) s.canvas.origin = detail::vec3_from_json(j.at("origin"), "origin");
    read_field(j, "background", s.background);
    read_field(j, "noise_sigma", s.noise_sigma);
    if (j.contains("organs")) {
        s.organs.clear();
        for (const auto& o : j.at("organs")) {
            reject_unknown(o, {"id", "name", "center_mm", "semi_axes_mm", "intensity"}, "corpus.template.organs[]");
            OrganSpec organ;
            organ.id = o.at("id").get<int>();
            organ.name = o.value("name", "organ" + std::to_string(organ.id));
            organ.center_mm = detail::vec3_from_json(o.at("center_mm"), "center_mm");
            organ.semi_axes_mm = detail::vec3_from_json(o.at("semi_axes_mm"), "semi_axes_mm");
            organ.intensity = o.at("intensity").get<double>();
            s.organs.push_back(organ);
        }
    }
}

const char* source_name(LocalizerSource s) {
    return s == LocalizerSource::trained ? "trained" : "ground_truth_heatmaps";
}

}  // namespace

void PipelineConfig::validate() const {
    if (corpus.n_volumes == 0) throw InvalidArgument("corpus.n_volumes must be positive");
    if (corpus.n_train > corpus.n_volumes) throw InvalidArgument("corpus.n_train exceeds corpus.n_volumes");
    corpus.templ.validate();
    if (!(localization.sigma_sq > 0.0)) throw InvalidArgument("localization.sigma_sq must be positive");
    if (!(localization.tau > 0.0 && localization.tau < 1.0)) throw InvalidArgument("localization.tau must lie in (0,1)");
    if (localization.margin_v < 0) throw InvalidArgument("localization.margin_v must be non-negative");
    if (!(localization.grid_spacing > 0.0)) throw InvalidArgument("localization.grid_spacing must be positive");
    if (!(segmentation.grid_spacing > 0.0)) throw InvalidArgument("segmentation.grid_spacing must be positive");
    if (!(segmentation.decision_threshold > 0.0 && segmentation.decision_threshold < 1.0)) {
        throw InvalidArgument("segmentation.decision_threshold must lie in (0,1)");
    }
    if (!(segmentation.oracle.half_width > 0.0) || !(segmentation.oracle.softness > 0.0)) {
        throw InvalidArgument("segmentation.oracle parameters must be positive");
    }
    if (model.hidden_layers < 0 || model.channels <= 0) throw InvalidArgument("model shape must be positive");
    training.localizer.validate();
    training.segmenter.validate();
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
    PipelineConfig c;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed config JSON: ") + e.what());
    }
    try {
        reject_unknown(doc, {"seed", "paths", "corpus", "localization", "segmentation", "model", "training", "metrics"},
                       "config");
        read_field(doc, "seed", c.seed);
        if (doc.contains("paths")) {
            const auto& p = doc.at("paths");
            reject_unknown(p, {"corpus", "stats", "models"}, "paths");
            read_field(p, "corpus", c.paths.corpus);
            read_field(p, "stats", c.paths.stats);
            read_field(p, "models", c.paths.models);
        }
        if (doc.contains("corpus")) {
            const auto& p = doc.at("corpus");
            reject_unknown(p, {"n_volumes", "n_train", "jitter", "template"}, "corpus");
            read_field(p, "n_volumes", c.corpus.n_volumes);
            read_field(p, "n_train", c.corpus.n_train);
            if (p.contains("jitter")) {
                reject_unknown(p.at("jitter"), {"center_mm", "size_fraction"}, "corpus.jitter");
                read_field(p.at("jitter"), "center_mm", c.corpus.jitter.center_mm);
                read_field(p.at("jitter"), "size_fraction", c.corpus.jitter.size_fraction);
            }
            if (p.contains("template")) template_from_json(p.at("template"), c.corpus.templ);
        }
        if (doc.contains("localization")) {
            const auto& p = doc.at("localization");
            reject_unknown(p, {"sigma_sq", "tau", "margin_v", "grid_spacing", "centroid_mode", "source"},
                           "localization");
            read_field(p, "sigma_sq", c.localization.sigma_sq);
            read_field(p, "tau", c.localization.tau);
            read_field(p, "margin_v", c.localization.margin_v);
            read_field(p, "grid_spacing", c.localization.grid_spacing);
            if (p.contains("centroid_mode")) {
                const auto m = p.at("centroid_mode").get<std::string>();
                if (m == "voxel_mean") c.localization.centroid_mode = CentroidMode::voxel_mean;
                else if (m == "bbox_midpoint") c.localization.centroid_mode = CentroidMode::bbox_midpoint;
                else throw InvalidArgument("localization.centroid_mode must be voxel_mean or bbox_midpoint");
            }
            if (p.contains("source")) {
                const auto s = p.at("source").get<std::string>();
                if (s == "trained") c.localization.source = LocalizerSource::trained;
                else if (s == "ground_truth_heatmaps") c.localization.source = LocalizerSource::ground_truth_heatmaps;
                else throw InvalidArgument("localization.source must be trained or ground_truth_heatmaps");
            }
        }
        if (doc.contains("segmentation")) {
            const auto& p = doc.at("segmentation");
            reject_unknown(p, {"grid_spacing", "decision_threshold", "predictor", "oracle", "train_boxes"},
                           "segmentation");
            read_field(p, "grid_spacing", c.segmentation.grid_spacing);
            read_field(p, "decision_threshold", c.segmentation.decision_threshold);
            if (p.contains("predictor")) {
                const auto s = p.at("predictor").get<std::string>();
                if (s == "oracle") c.segmentation.predictor = PredictorKind::oracle;
                else if (s == "trained") c.segmentation.predictor = PredictorKind::trained;
                else throw InvalidArgument("segmentation.predictor must be oracle or trained");
            }
            if (p.contains("oracle")) {
                reject_unknown(p.at("oracle"), {"half_width", "softness"}, "segmentation.oracle");
                read_field(p.at("oracle"), "half_width", c.segmentation.oracle.half_width);
                read_field(p.at("oracle"), "softness", c.segmentation.oracle.softness);
            }
            if (p.contains("train_boxes")) {
                const auto s = p.at("train_boxes").get<std::string>();
                if (s == "ground_truth") c.segmentation.train_boxes = TrainBoxSource::ground_truth;
                else if (s == "predicted") c.segmentation.train_boxes = TrainBoxSource::predicted;
                else throw InvalidArgument("segmentation.train_boxes must be ground_truth or predicted");
            }
        }
        if (doc.contains("model")) {
            reject_unknown(doc.at("model"), {"hidden_layers", "channels"}, "model");
            read_field(doc.at("model"), "hidden_layers", c.model.hidden_layers);
            read_field(doc.at("model"), "channels", c.model.channels);
        }
        if (doc.contains("training")) {
            const auto& p = doc.at("training");
            reject_unknown(p, {"localizer", "segmenter"}, "training");
            if (p.contains("localizer")) train_from_json(p.at("localizer"), c.training.localizer, "training.localizer");
            if (p.contains("segmenter")) train_from_json(p.at("segmenter"), c.training.segmenter, "training.segmenter");
        }
        if (doc.contains("metrics")) {
            reject_unknown(doc.at("metrics"), {"aggregation"}, "metrics");
            if (doc.at("metrics").contains("aggregation")) {
                const auto s = doc.at("metrics").at("aggregation").get<std::string>();
                if (s == "volume_organ") c.dice_aggregation = GlobalAggregation::volume_organ;
                else if (s == "per_volume_mean") c.dice_aggregation = GlobalAggregation::per_volume_mean;
                else throw InvalidArgument("metrics.aggregation must be volume_organ or per_volume_mean");
            }
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    return parse_pipeline_config(detail::read_json_file(path).dump());
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
    json doc{
        {"seed", c.seed},
        {"paths", {{"corpus", c.paths.corpus}, {"stats", c.paths.stats}, {"models", c.paths.models}}},
        {"corpus",
         {{"n_volumes", c.corpus.n_volumes},
          {"n_train", c.corpus.n_train},
          {"jitter", {{"center_mm", c.corpus.jitter.center_mm}, {"size_fraction", c.corpus.jitter.size_fraction}}},
          {"template", template_to_json(c.corpus.templ)}}},
        {"localization",
         {{"sigma_sq", c.localization.sigma_sq},
          {"tau", c.localization.tau},
          {"margin_v", c.localization.margin_v},
          {"grid_spacing", c.localization.grid_spacing},
          {"centroid_mode",
           c.localization.centroid_mode == CentroidMode::voxel_mean ? "voxel_mean" : "bbox_midpoint"},
          {"source", source_name(c.localization.source)}}},
        {"segmentation",
         {{"grid_spacing", c.segmentation.grid_spacing},
          {"decision_threshold", c.segmentation.decision_threshold},
          {"predictor", c.segmentation.predictor == PredictorKind::oracle ? "oracle" : "trained"},
          {"oracle", {{"half_width", c.segmentation.oracle.half_width}, {"softness", c.segmentation.oracle.softness}}},
          {"train_boxes", c.segmentation.train_boxes == TrainBoxSource::ground_truth ? "ground_truth" : "predicted"}}},
        {"model", {{"hidden_layers", c.model.hidden_layers}, {"channels", c.model.channels}}},
        {"training", {{"localizer", train_to_json(c.training.localizer)}, {"segmenter", train_to_json(c.training.segmenter)}}},
        {"metrics",
         {{"aggregation", c.dice_aggregation == GlobalAggregation::volume_organ ? "volume_organ" : "per_volume_mean"}}}};
    return doc.dump(2) + "\n";
}

}  // namespace organseg
