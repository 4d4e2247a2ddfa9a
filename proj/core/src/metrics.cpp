#include "organseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json_util.hpp"
#include "organseg/errors.hpp"

namespace organseg {

double dice(const Volume3D& pred_mask, const Volume3D& truth_mask) {
    if (pred_mask.dims() != truth_mask.dims()) {
        throw InvalidArgument("dice: mask dims differ " + to_string(pred_mask.dims()) + " vs " +
                              to_string(truth_mask.dims()));
    }
    const auto p = pred_mask.data();
    const auto g = truth_mask.data();
    std::int64_t np = 0;
    std::int64_t ng = 0;
    std::int64_t both = 0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        const bool a = p[n] != 0.0;
        const bool b = g[n] != 0.0;
        np += a;
        ng += b;
        both += a && b;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

namespace {

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return out;
}

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

DiceReport evaluate_corpus(std::span<const NamedLabelMap> predictions, std::span<const NamedLabelMap> truths,
                           const OrganCatalog& catalog, GlobalAggregation aggregation) {
    if (predictions.size() != truths.size()) {
        throw InvalidArgument("evaluate_corpus: " + std::to_string(predictions.size()) + " predictions vs " +
                              std::to_string(truths.size()) + " truths");
    }
    DiceReport report;
    report.aggregation = aggregation;
    std::map<int, std::vector<double>> by_organ;
    std::vector<double> pooled;
    for (std::size_t v = 0; v < predictions.size(); ++v) {
        const auto& pred = predictions[v];
        const auto& truth = truths[v];
        if (pred.volume != truth.volume) {
            throw InvalidArgument("evaluate_corpus: unpaired volumes '" + pred.volume + "' and '" + truth.volume + "'");
        }
        if (pred.labels == nullptr || truth.labels == nullptr ||
            !same_grid(pred.labels->grid(), truth.labels->grid())) {
            throw InvalidArgument("evaluate_corpus: grids of '" + pred.volume + "' differ");
        }
        std::vector<double> this_volume;
        for (const auto& organ : catalog) {
            // Count-based so arbitrary label values never leak between organs.
            const auto p = pred.labels->data();
            const auto g = truth.labels->data();
            std::int64_t np = 0;
            std::int64_t ng = 0;
            std::int64_t both = 0;
            for (std::size_t n = 0; n < p.size(); ++n) {
                const bool a = p[n] == organ.id;
                const bool b = g[n] == organ.id;
                np += a;
                ng += b;
                both += a && b;
            }
            const double d = np + ng == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
            report.cases.push_back({pred.volume, organ.id, d});
            by_organ[organ.id].push_back(d);
            this_volume.push_back(d);
        }
        if (aggregation == GlobalAggregation::volume_organ) {
            pooled.insert(pooled.end(), this_volume.begin(), this_volume.end());
        } else {
            pooled.push_back(mean_std(this_volume).mean);
        }
    }
    for (const auto& [id, values] : by_organ) {
        const auto ms = mean_std(values);
        report.per_organ[id] = {ms.mean,
                                ms.stddev,
                                *std::min_element(values.begin(), values.end()),
                                median(values),
                                *std::max_element(values.begin(), values.end()),
                                values.size()};
    }
    const auto global = mean_std(pooled);
    report.global_mean = global.mean;
    report.global_stddev = global.stddev;
    return report;
}

void write_dice_report(const std::filesystem::path& path, const DiceReport& report, const OrganCatalog& catalog) {
    using detail::json;
    json organs = json::array();
    for (const auto& [id, s] : report.per_organ) {
        const auto* info = find_organ(catalog, id);
        organs.push_back({{"organ_id", id},
                          {"name", info ? info->name : std::string{}},
                          {"mean", s.mean},
                          {"std", s.stddev},
                          {"min", s.min},
                          {"median", s.median},
                          {"max", s.max},
                          {"count", s.count}});
    }
    json doc{{"global",
              {{"mean", report.global_mean},
               {"std", report.global_stddev},
               {"aggregation",
                report.aggregation == GlobalAggregation::volume_organ ? "volume_organ" : "per_volume_mean"},
               {"cases", report.cases.size()}}},
             {"organs", organs}};
    detail::write_json_file(path, doc);
}

void write_dice_csv(const std::filesystem::path& path, const DiceReport& report) {
    std::string text = "volume,organ,dice\n";
    char line[160];
    for (const auto& c : report.cases) {
        std::snprintf(line, sizeof(line), "%s,%d,%.17g\n", c.volume.c_str(), c.organ_id, c.dice);
        text += line;
    }
    detail::write_text_file(path, text);
}

}  // namespace organseg
