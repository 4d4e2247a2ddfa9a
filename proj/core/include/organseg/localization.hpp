#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "organseg/dataset.hpp"
#include "organseg/geometry.hpp"
#include "organseg/heatmap.hpp"
#include "organseg/volume.hpp"

namespace organseg {

inline constexpr double kDefaultTau = 0.1;
inline constexpr int kDefaultMarginVoxels = 3;

// Mean tight bounding-box size per organ over a set of label maps.
struct OrganSizeStats {
    Vec3 mean_size_mm{};
    std::size_t count = 0;
};

struct OrganStats {
    std::map<int, OrganSizeStats> organs;

    const OrganSizeStats& at(int organ_id) const;
};

// Tight box of `organ_id` in voxel indices, nullopt when the organ has no voxel.
std::optional<BoundingBox> tight_box(const Volume3D& labels, int organ_id);

// Throws MissingStatistics when an organ of the catalog occurs in none of the maps.
OrganStats compute_organ_stats(std::span<const Volume3D> label_maps, const OrganCatalog& catalog);

void write_organ_stats(const std::filesystem::path& path, const OrganStats& stats);
OrganStats read_organ_stats(const std::filesystem::path& path);

enum class CentroidMode {
    voxel_mean,       // mean of the voxel centres of the region
    bbox_midpoint,    // centre of the region's bounding box
};

struct CentroidEstimate {
    bool found = false;
    Vec3 centroid_mm{};
    double peak = 0.0;
    std::size_t region_voxels = 0;
};

// Threshold at tau, keep the largest 26-connected component (first in scan order on ties) and
// report its centre. A channel with no voxel >= tau is absent.
CentroidEstimate extract_centroid(const Volume3D& channel, double tau = kDefaultTau,
                                  CentroidMode mode = CentroidMode::voxel_mean);

// Box centred on the voxel containing `centroid_mm`, extending ceil(mean_size / 2 / spacing) + margin
// voxels to each side, clamped to the grid.
BoundingBox make_box(const Vec3& centroid_mm, const OrganStats& stats, int organ_id, int margin_voxels,
                     const GridSpec& grid);

enum class OrganStatus { found, absent };

struct OrganLocalization {
    int organ_id = 0;
    OrganStatus status = OrganStatus::absent;
    Vec3 centroid_mm{};
    std::optional<BoundingBox> box;
    double peak = 0.0;
};

struct LocalizationResult {
    GridSpec grid;
    std::vector<OrganLocalization> organs;

    const OrganLocalization* find(int organ_id) const noexcept;
};

struct LocalizationOptions {
    double tau = kDefaultTau;
    int margin_voxels = kDefaultMarginVoxels;
    CentroidMode mode = CentroidMode::voxel_mean;
};

LocalizationResult localize_all(const HeatmapStack& pred, const OrganStats& stats, const OrganCatalog& catalog,
                                const LocalizationOptions& options = {});

void write_localization(const std::filesystem::path& path, const LocalizationResult& result);
LocalizationResult read_localization(const std::filesystem::path& path);

}  // namespace organseg
