#include "organseg/geometry.hpp"

#include <algorithm>
#include <sstream>

#include "organseg/errors.hpp"

namespace organseg {

void GridSpec::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] <= 0) {
            throw InvalidArgument("grid dims must be positive, got " + to_string(dims));
        }
        if (!std::isfinite(spacing[a]) || spacing[a] <= 0.0) {
            throw InvalidArgument("grid spacing must be finite and positive, got " + to_string(spacing));
        }
        if (!std::isfinite(origin[a])) {
            throw InvalidArgument("grid origin must be finite");
        }
    }
}

bool same_spacing(const Vec3& a, const Vec3& b, double rel_tol) noexcept {
    for (int i = 0; i < 3; ++i) {
        if (std::abs(a[i] - b[i]) > rel_tol * std::max(std::abs(a[i]), std::abs(b[i]))) return false;
    }
    return true;
}

bool same_grid(const GridSpec& a, const GridSpec& b, double rel_tol) noexcept {
    if (a.dims != b.dims || !same_spacing(a.spacing, b.spacing, rel_tol)) return false;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(a.origin[i] - b.origin[i]) > rel_tol * std::max(1.0, std::abs(a.origin[i]))) {
            return false;
        }
    }
    return true;
}

void BoundingBox::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (min_corner[a] >= max_corner[a]) {
            throw InvalidArgument("bounding box is empty: min " + to_string(min_corner) + " max " +
                                  to_string(max_corner));
        }
        if (!std::isfinite(spacing[a]) || spacing[a] <= 0.0) {
            throw InvalidArgument("bounding box spacing must be positive");
        }
    }
}

BoundingBox full_box(const GridSpec& grid) {
    return BoundingBox{{0, 0, 0}, grid.dims, grid.spacing};
}

ClippedBox clip_to_grid(const BoundingBox& box, const GridSpec& grid) {
    ClippedBox out{box, false};
    for (int a = 0; a < 3; ++a) {
        out.box.min_corner[a] = std::max<std::int64_t>(box.min_corner[a], 0);
        out.box.max_corner[a] = std::min<std::int64_t>(box.max_corner[a], grid.dims[a]);
        if (out.box.min_corner[a] >= out.box.max_corner[a]) out.empty = true;
    }
    return out;
}

BoundingBox map_box(const BoundingBox& box, const GridSpec& from, const GridSpec& to) {
    constexpr double kSnap = 1e-6;
    BoundingBox out;
    out.spacing = to.spacing;
    for (int a = 0; a < 3; ++a) {
        const double lo = from.origin[a] + static_cast<double>(box.min_corner[a]) * from.spacing[a];
        const double hi = from.origin[a] + static_cast<double>(box.max_corner[a]) * from.spacing[a];
        auto first = static_cast<std::int64_t>(std::floor((lo - to.origin[a]) / to.spacing[a] + kSnap));
        auto last = static_cast<std::int64_t>(std::ceil((hi - to.origin[a]) / to.spacing[a] - kSnap));
        first = std::clamp<std::int64_t>(first, 0, to.dims[a]);
        last = std::clamp<std::int64_t>(last, 0, to.dims[a]);
        out.min_corner[a] = first;
        out.max_corner[a] = last;
    }
    return out;
}

std::string to_string(const Index3& idx) {
    std::ostringstream os;
    os << "(" << idx[0] << ", " << idx[1] << ", " << idx[2] << ")";
    return os.str();
}

std::string to_string(const Vec3& v) {
    std::ostringstream os;
    os << "(" << v[0] << ", " << v[1] << ", " << v[2] << ")";
    return os.str();
}

}  // namespace organseg
