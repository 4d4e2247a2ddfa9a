#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "organseg/geometry.hpp"

namespace organseg {

enum class VolumeKind { intensity, probability, label, heatmap };

std::string_view to_string(VolumeKind kind) noexcept;
VolumeKind parse_volume_kind(std::string_view text);

// Scalar field on an axis-aligned grid. Samples are stored x-fastest, then y, then z:
// linear index = i + nx * (j + ny * k).
//
// Kind-specific value ranges (probability/heatmap in [0,1], labels non-negative integers)
// are checked by validate(); operations trust their inputs and keep kinds consistent.
class Volume3D {
public:
    Volume3D() = default;
    Volume3D(GridSpec grid, VolumeKind kind, double fill = 0.0);
    Volume3D(GridSpec grid, VolumeKind kind, std::vector<double> data);

    const GridSpec& grid() const noexcept { return grid_; }
    const Dims3& dims() const noexcept { return grid_.dims; }
    const Vec3& spacing() const noexcept { return grid_.spacing; }
    const Vec3& origin() const noexcept { return grid_.origin; }
    VolumeKind kind() const noexcept { return kind_; }
    std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    std::int64_t linear_index(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
        return i + grid_.dims[0] * (j + grid_.dims[1] * k);
    }
    Index3 index_of(std::int64_t linear) const noexcept {
        const auto nx = grid_.dims[0];
        const auto ny = grid_.dims[1];
        return {linear % nx, (linear / nx) % ny, linear / (nx * ny)};
    }

    double at(std::int64_t i, std::int64_t j, std::int64_t k) const noexcept {
        return data_[static_cast<std::size_t>(linear_index(i, j, k))];
    }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k) noexcept {
        return data_[static_cast<std::size_t>(linear_index(i, j, k))];
    }
    double at(const Index3& idx) const noexcept { return at(idx[0], idx[1], idx[2]); }
    double& at(const Index3& idx) noexcept { return at(idx[0], idx[1], idx[2]); }

    Volume3D with_kind(VolumeKind kind) const;

    // Full invariant check; `max_label` bounds label volumes when >= 0.
    void validate(std::int64_t max_label = -1) const;

private:
    GridSpec grid_{};
    VolumeKind kind_ = VolumeKind::intensity;
    std::vector<double> data_ = std::vector<double>(1, 0.0);
};

enum class Interpolation { trilinear, nearest };

// Resample onto a grid with the same origin and `target_spacing`. Output dims are
// ceil(dims * spacing / target_spacing). Target voxel centres are mapped back into the source's
// continuous index space; samples beyond the outermost source centres clamp to the edge.
Volume3D resample(const Volume3D& vol, const Vec3& target_spacing, Interpolation mode);

struct NormalizationStats {
    double mean = 0.0;
    double stddev = 1.0;  // population; 0 for constant volumes
};

NormalizationStats normalization_stats(const Volume3D& vol);
// (x - mean) / stddev, or all zeros when stddev is 0.
Volume3D apply_normalization(const Volume3D& vol, const NormalizationStats& stats);
double normalize_value(double raw, const NormalizationStats& stats) noexcept;
// Zero mean, unit population variance. Constant volumes map to zeros.
Volume3D normalize(const Volume3D& vol);

inline constexpr double kAirHu = -1024.0;

// Extract `box` from `vol`; cells outside the source are set to `pad_value`. The output origin
// is shifted so retained voxels keep their world positions.
Volume3D crop(const Volume3D& vol, const BoundingBox& box, double pad_value = kAirHu);

// Copy `src` into `dst` at `box`; only the part of the box inside `dst` is written.
Volume3D paste(const Volume3D& dst, const Volume3D& src, const BoundingBox& box);

}  // namespace organseg
