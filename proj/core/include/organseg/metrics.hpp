#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "organseg/dataset.hpp"
#include "organseg/volume.hpp"

namespace organseg {

// 2|P & G| / (|P| + |G|) over non-zero voxels; 1 when both masks are empty.
double dice(const Volume3D& pred_mask, const Volume3D& truth_mask);

enum class GlobalAggregation {
    volume_organ,     // mean/std over every (volume, organ) pair
    per_volume_mean,  // mean/std over per-volume organ means
};

struct CaseDice {
    std::string volume;
    int organ_id = 0;
    double dice = 0.0;
};

struct OrganDiceSummary {
    double mean = 0.0;
    double stddev = 0.0;  // population
    double min = 0.0;
    double median = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

struct DiceReport {
    std::vector<CaseDice> cases;
    std::map<int, OrganDiceSummary> per_organ;
    double global_mean = 0.0;
    double global_stddev = 0.0;
    GlobalAggregation aggregation = GlobalAggregation::volume_organ;
};

struct NamedLabelMap {
    std::string volume;
    const Volume3D* labels = nullptr;
};

// Predictions and truths are paired by position and must carry the same volume names and grids.
DiceReport evaluate_corpus(std::span<const NamedLabelMap> predictions, std::span<const NamedLabelMap> truths,
                           const OrganCatalog& catalog,
                           GlobalAggregation aggregation = GlobalAggregation::volume_organ);

// dice_report.json: per-organ summary and global mean/std.
void write_dice_report(const std::filesystem::path& path, const DiceReport& report, const OrganCatalog& catalog);
// dice_per_case.csv: volume,organ,dice.
void write_dice_csv(const std::filesystem::path& path, const DiceReport& report);

}  // namespace organseg
