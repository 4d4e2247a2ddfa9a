#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

namespace organseg {

// Millimetre vector / point, ordered (x, y, z).
using Vec3 = std::array<double, 3>;
// Signed voxel index; boxes may reach outside the grid before clamping.
using Index3 = std::array<std::int64_t, 3>;
using Dims3 = std::array<std::int64_t, 3>;

// Axis-aligned sampling grid.
//
// `origin` is the world position (mm) of the outer corner of voxel (0,0,0), so voxel
// (i,j,k) covers [origin + index*spacing, origin + (index+1)*spacing) and its centre is
// origin + (index + 0.5)*spacing. Grids of different spacing that share an origin
// therefore cover the same physical region.
struct GridSpec {
    Dims3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    std::int64_t voxel_count() const noexcept { return dims[0] * dims[1] * dims[2]; }

    Vec3 voxel_center(const Index3& idx) const noexcept {
        return {origin[0] + (static_cast<double>(idx[0]) + 0.5) * spacing[0],
                origin[1] + (static_cast<double>(idx[1]) + 0.5) * spacing[1],
                origin[2] + (static_cast<double>(idx[2]) + 0.5) * spacing[2]};
    }

    // Voxel whose cell contains `p` (may lie outside the grid).
    Index3 voxel_containing(const Vec3& p) const noexcept {
        Index3 out{};
        for (int a = 0; a < 3; ++a) {
            out[a] = static_cast<std::int64_t>(std::floor((p[a] - origin[a]) / spacing[a]));
        }
        return out;
    }

    bool contains(const Index3& idx) const noexcept {
        for (int a = 0; a < 3; ++a) {
            if (idx[a] < 0 || idx[a] >= dims[a]) return false;
        }
        return true;
    }

    Vec3 extent_mm() const noexcept {
        return {static_cast<double>(dims[0]) * spacing[0], static_cast<double>(dims[1]) * spacing[1],
                static_cast<double>(dims[2]) * spacing[2]};
    }

    // Throws InvalidArgument unless dims > 0 and spacing finite and > 0.
    void validate() const;
};

bool same_spacing(const Vec3& a, const Vec3& b, double rel_tol = 1e-9) noexcept;
bool same_grid(const GridSpec& a, const GridSpec& b, double rel_tol = 1e-9) noexcept;

// Voxel box on a grid of the given spacing: [min_corner, max_corner) per axis.
struct BoundingBox {
    Index3 min_corner{0, 0, 0};
    Index3 max_corner{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};

    Dims3 size() const noexcept {
        return {max_corner[0] - min_corner[0], max_corner[1] - min_corner[1],
                max_corner[2] - min_corner[2]};
    }
    Vec3 size_mm() const noexcept {
        const auto s = size();
        return {static_cast<double>(s[0]) * spacing[0], static_cast<double>(s[1]) * spacing[1],
                static_cast<double>(s[2]) * spacing[2]};
    }
    bool contains(const Index3& idx) const noexcept {
        for (int a = 0; a < 3; ++a) {
            if (idx[a] < min_corner[a] || idx[a] >= max_corner[a]) return false;
        }
        return true;
    }
    bool operator==(const BoundingBox&) const = default;

    void validate() const;
};

// Box covering the whole grid.
BoundingBox full_box(const GridSpec& grid);

// Intersection of `box` with the grid bounds; nullopt-like empty result signalled by `empty`.
struct ClippedBox {
    BoundingBox box;
    bool empty = true;
};
ClippedBox clip_to_grid(const BoundingBox& box, const GridSpec& grid);

// Re-express a box from one grid on another through world coordinates: the new box is the
// smallest set of `to` voxels whose cells cover the world extent of `box`, clamped to `to`.
BoundingBox map_box(const BoundingBox& box, const GridSpec& from, const GridSpec& to);

std::string to_string(const Index3& idx);
std::string to_string(const Vec3& v);

}  // namespace organseg
