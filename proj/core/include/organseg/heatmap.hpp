#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "organseg/dataset.hpp"
#include "organseg/geometry.hpp"
#include "organseg/volume.hpp"

namespace organseg {

inline constexpr double kDefaultSigmaSq = 150.0;  // mm^2

// One heatmap channel per organ, all on the same grid. Channel n belongs to organ_ids[n].
struct HeatmapStack {
    std::vector<Volume3D> channels;
    std::vector<int> organ_ids;
    double sigma_sq = kDefaultSigmaSq;

    std::size_t size() const noexcept { return channels.size(); }
    const GridSpec& grid() const { return channels.front().grid(); }
    // Same channel count, ids and grids.
    bool same_shape(const HeatmapStack& other) const;
};

// Channel n: exp(-|x - mu_n|^2 / (2 sigma_sq)) at every voxel centre x, distances in mm.
// Absent organs (nullopt centroid) give an all-zero channel.
HeatmapStack synthesize_heatmaps(const CentroidSet& centroids, const GridSpec& grid, double sigma_sq = kDefaultSigmaSq);

// Mean of squared differences over all voxels and channels.
double l2_loss(const HeatmapStack& truth, const HeatmapStack& pred);
// d l2_loss / d pred = 2 (pred - truth) / (voxels * channels).
HeatmapStack l2_loss_grad(const HeatmapStack& truth, const HeatmapStack& pred);

// Stack layout on disk: `<prefix>.stack.json` plus `<prefix>.ch<id>.img` per channel.
void write_heatmap_stack(const std::filesystem::path& prefix, const HeatmapStack& stack);
HeatmapStack read_heatmap_stack(const std::filesystem::path& prefix);

}  // namespace organseg
