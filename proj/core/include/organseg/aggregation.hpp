#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "organseg/geometry.hpp"
#include "organseg/segmentation.hpp"
#include "organseg/volume.hpp"

namespace organseg {

inline constexpr double kDefaultDecisionThreshold = 0.5;

// Per-organ probability crops, each box on `target`.
struct CropSet {
    std::vector<ProbabilityCrop> crops;
    GridSpec target;
};

struct AggregationStats {
    std::map<int, std::int64_t> voxels_per_organ;  // final label counts
    std::int64_t covered_by_multiple = 0;          // voxels inside two or more boxes
    std::int64_t contested = 0;                    // voxels with two or more candidates
    std::map<int, std::int64_t> lost_to_conflict;  // candidate voxels an organ did not win
};

struct AggregationResult {
    Volume3D labels;            // 0 background, organ id otherwise
    Volume3D winning_probability;  // probability of the winning organ, 0 for background
    AggregationStats stats;
};

// Per voxel, organs whose probability is >= decision_threshold are candidates; the highest
// probability wins, exact ties go to the lowest organ id. No candidate, or no covering crop, means
// background. The result does not depend on crop order.
AggregationResult aggregate(const CropSet& crops, double decision_threshold = kDefaultDecisionThreshold);

void write_aggregation_report(const std::filesystem::path& path, const AggregationStats& stats);

}  // namespace organseg
