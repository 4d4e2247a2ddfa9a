#include "organseg/aggregation.hpp"

#include <algorithm>
#include <set>

#include "json_util.hpp"
#include "organseg/errors.hpp"

namespace organseg {

AggregationResult aggregate(const CropSet& crops, double decision_threshold) {
    if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
        throw InvalidArgument("decision threshold must lie in (0,1)");
    }
    crops.target.validate();
    std::set<int> ids;
    for (const auto& c : crops.crops) {
        if (c.organ_id <= 0) throw InvalidArgument("crop organ ids must be positive");
        if (!ids.insert(c.organ_id).second) {
            throw InvalidArgument("duplicate organ id " + std::to_string(c.organ_id) + " in crop set");
        }
        if (c.probability.dims() != c.box.size()) {
            throw InvalidArgument("crop of organ " + std::to_string(c.organ_id) + " does not match its box size");
        }
        if (!same_spacing(c.box.spacing, crops.target.spacing)) {
            throw InvalidArgument("crop of organ " + std::to_string(c.organ_id) + " is not on the target grid");
        }
    }

    // Visit organs by ascending id so a strict ">" keeps the lowest id on exact ties.
    std::vector<const ProbabilityCrop*> order;
    for (const auto& c : crops.crops) order.push_back(&c);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->organ_id < b->organ_id; });

    AggregationResult result{Volume3D(crops.target, VolumeKind::label, 0.0),
                             Volume3D(crops.target, VolumeKind::probability, 0.0), {}};
    const auto n = static_cast<std::size_t>(crops.target.voxel_count());
    std::vector<std::uint8_t> coverage(n, 0);
    std::vector<std::uint8_t> candidates(n, 0);
    auto labels = result.labels.data();
    auto best = result.winning_probability.data();

    for (const auto* c : order) {
        const auto clipped = clip_to_grid(c->box, crops.target);
        if (clipped.empty) continue;
        const auto& lo = clipped.box.min_corner;
        const auto& hi = clipped.box.max_corner;
        for (std::int64_t k = lo[2]; k < hi[2]; ++k) {
            for (std::int64_t j = lo[1]; j < hi[1]; ++j) {
                for (std::int64_t i = lo[0]; i < hi[0]; ++i) {
                    const auto lin = static_cast<std::size_t>(result.labels.linear_index(i, j, k));
                    coverage[lin] = static_cast<std::uint8_t>(std::min(coverage[lin] + 1, 255));
                    const double p = c->probability.at(i - c->box.min_corner[0], j - c->box.min_corner[1],
                                                       k - c->box.min_corner[2]);
                    if (p < decision_threshold) continue;
                    candidates[lin] = static_cast<std::uint8_t>(std::min(candidates[lin] + 1, 255));
                    if (labels[lin] == 0.0 || p > best[lin]) {
                        labels[lin] = c->organ_id;
                        best[lin] = p;
                    }
                }
            }
        }
    }

    auto& stats = result.stats;
    for (int id : ids) {
        stats.voxels_per_organ[id] = 0;
        stats.lost_to_conflict[id] = 0;
    }
    for (std::size_t v = 0; v < n; ++v) {
        if (labels[v] > 0.0) ++stats.voxels_per_organ[static_cast<int>(labels[v])];
        if (coverage[v] >= 2) ++stats.covered_by_multiple;
        if (candidates[v] >= 2) ++stats.contested;
    }
    // Second pass for losers on contested voxels.
    for (const auto* c : order) {
        const auto clipped = clip_to_grid(c->box, crops.target);
        if (clipped.empty) continue;
        const auto& lo = clipped.box.min_corner;
        const auto& hi = clipped.box.max_corner;
        for (std::int64_t k = lo[2]; k < hi[2]; ++k) {
            for (std::int64_t j = lo[1]; j < hi[1]; ++j) {
                for (std::int64_t i = lo[0]; i < hi[0]; ++i) {
                    const auto lin = static_cast<std::size_t>(result.labels.linear_index(i, j, k));
                    const double p = c->probability.at(i - c->box.min_corner[0], j - c->box.min_corner[1],
                                                       k - c->box.min_corner[2]);
                    if (p >= decision_threshold && labels[lin] != c->organ_id) ++stats.lost_to_conflict[c->organ_id];
                }
            }
        }
    }
    return result;
}

void write_aggregation_report(const std::filesystem::path& path, const AggregationStats& stats) {
    detail::json organs = detail::json::array();
    for (const auto& [id, count] : stats.voxels_per_organ) {
        organs.push_back({{"organ_id", id}, {"voxels", count}, {"lost_to_conflict", stats.lost_to_conflict.at(id)}});
    }
    detail::write_json_file(path, {{"organs", organs},
                                   {"overlap",
                                    {{"covered_by_multiple_boxes", stats.covered_by_multiple},
                                     {"contested_voxels", stats.contested}}}});
}

}  // namespace organseg
