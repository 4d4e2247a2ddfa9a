#include "organseg/volume.hpp"

#include <algorithm>
#include <cmath>

#include "organseg/errors.hpp"

namespace organseg {

std::string_view to_string(VolumeKind kind) noexcept {
    switch (kind) {
        case VolumeKind::intensity: return "intensity";
        case VolumeKind::probability: return "probability";
        case VolumeKind::label: return "label";
        case VolumeKind::heatmap: return "heatmap";
    }
    return "intensity";
}

VolumeKind parse_volume_kind(std::string_view text) {
    if (text == "intensity") return VolumeKind::intensity;
    if (text == "probability") return VolumeKind::probability;
    if (text == "label") return VolumeKind::label;
    if (text == "heatmap") return VolumeKind::heatmap;
    throw InvalidArgument("unknown volume kind '" + std::string(text) + "'");
}

Volume3D::Volume3D(GridSpec grid, VolumeKind kind, double fill) : grid_(grid), kind_(kind) {
    grid_.validate();
    data_.assign(static_cast<std::size_t>(grid_.voxel_count()), fill);
}

Volume3D::Volume3D(GridSpec grid, VolumeKind kind, std::vector<double> data)
    : grid_(grid), kind_(kind), data_(std::move(data)) {
    grid_.validate();
    if (static_cast<std::int64_t>(data_.size()) != grid_.voxel_count()) {
        throw InvalidArgument("volume data length " + std::to_string(data_.size()) +
                              " does not match dims " + to_string(grid_.dims));
    }
}

Volume3D Volume3D::with_kind(VolumeKind kind) const {
    Volume3D out = *this;
    out.kind_ = kind;
    return out;
}

void Volume3D::validate(std::int64_t max_label) const {
    grid_.validate();
    if (static_cast<std::int64_t>(data_.size()) != grid_.voxel_count()) {
        throw InvalidArgument("volume data length does not match dims");
    }
    for (double v : data_) {
        switch (kind_) {
            case VolumeKind::probability:
            case VolumeKind::heatmap:
                if (!(v >= 0.0 && v <= 1.0)) {
                    throw InvalidArgument(std::string(to_string(kind_)) + " volume value outside [0,1]");
                }
                break;
            case VolumeKind::label:
                if (!(v >= 0.0) || v != std::floor(v) || (max_label >= 0 && v > static_cast<double>(max_label))) {
                    throw InvalidArgument("label volume value is not a valid label: " + std::to_string(v));
                }
                break;
            case VolumeKind::intensity:
                if (!std::isfinite(v)) throw InvalidArgument("intensity volume contains non-finite value");
                break;
        }
    }
}

namespace {

struct AxisSample {
    std::int64_t lo;
    std::int64_t hi;
    double frac;  // weight of hi
};

// Continuous source coordinate of each target centre along one axis.
std::vector<AxisSample> axis_samples(std::int64_t n_src, double s_src, std::int64_t n_dst, double s_dst,
                                     Interpolation mode) {
    std::vector<AxisSample> out(static_cast<std::size_t>(n_dst));
    const double ratio = s_dst / s_src;
    for (std::int64_t j = 0; j < n_dst; ++j) {
        double u = (static_cast<double>(j) + 0.5) * ratio - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(n_src - 1));
        if (mode == Interpolation::nearest) {
            const auto n = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(u + 0.5)), n_src - 1);
            out[static_cast<std::size_t>(j)] = {n, n, 0.0};
        } else {
            const auto lo = static_cast<std::int64_t>(std::floor(u));
            const auto hi = std::min<std::int64_t>(lo + 1, n_src - 1);
            out[static_cast<std::size_t>(j)] = {lo, hi, u - static_cast<double>(lo)};
        }
    }
    return out;
}

}  // namespace

Volume3D resample(const Volume3D& vol, const Vec3& target_spacing, Interpolation mode) {
    for (double s : target_spacing) {
        if (!std::isfinite(s) || s <= 0.0) {
            throw InvalidArgument("target spacing must be finite and positive, got " + to_string(target_spacing));
        }
    }
    if (vol.kind() == VolumeKind::label && mode != Interpolation::nearest) {
        throw InvalidArgument("label volumes must be resampled with nearest-neighbour interpolation");
    }
    if (same_spacing(vol.spacing(), target_spacing, 0.0)) return vol;

    GridSpec grid;
    grid.origin = vol.origin();
    grid.spacing = target_spacing;
    for (int a = 0; a < 3; ++a) {
        const double cells = static_cast<double>(vol.dims()[a]) * vol.spacing()[a] / target_spacing[a];
        // Snap away rounding noise so 60 * 1 / 3 gives 20, not 21.
        grid.dims[a] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(cells - 1e-9)));
    }

    const auto xs = axis_samples(vol.dims()[0], vol.spacing()[0], grid.dims[0], target_spacing[0], mode);
    const auto ys = axis_samples(vol.dims()[1], vol.spacing()[1], grid.dims[1], target_spacing[1], mode);
    const auto zs = axis_samples(vol.dims()[2], vol.spacing()[2], grid.dims[2], target_spacing[2], mode);

    Volume3D out(grid, vol.kind());
    for (std::int64_t k = 0; k < grid.dims[2]; ++k) {
        const auto& z = zs[static_cast<std::size_t>(k)];
        for (std::int64_t j = 0; j < grid.dims[1]; ++j) {
            const auto& y = ys[static_cast<std::size_t>(j)];
            for (std::int64_t i = 0; i < grid.dims[0]; ++i) {
                const auto& x = xs[static_cast<std::size_t>(i)];
                if (mode == Interpolation::nearest) {
                    out.at(i, j, k) = vol.at(x.lo, y.lo, z.lo);
                    continue;
                }
                const double c00 = vol.at(x.lo, y.lo, z.lo) * (1.0 - x.frac) + vol.at(x.hi, y.lo, z.lo) * x.frac;
                const double c10 = vol.at(x.lo, y.hi, z.lo) * (1.0 - x.frac) + vol.at(x.hi, y.hi, z.lo) * x.frac;
                const double c01 = vol.at(x.lo, y.lo, z.hi) * (1.0 - x.frac) + vol.at(x.hi, y.lo, z.hi) * x.frac;
                const double c11 = vol.at(x.lo, y.hi, z.hi) * (1.0 - x.frac) + vol.at(x.hi, y.hi, z.hi) * x.frac;
                const double c0 = c00 * (1.0 - y.frac) + c10 * y.frac;
                const double c1 = c01 * (1.0 - y.frac) + c11 * y.frac;
                out.at(i, j, k) = c0 * (1.0 - z.frac) + c1 * z.frac;
            }
        }
    }
    return out;
}

NormalizationStats normalization_stats(const Volume3D& vol) {
    const auto values = vol.data();
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    NormalizationStats stats;
    double sum = 0.0;
    for (double v : values) sum += v;
    stats.mean = sum / static_cast<double>(values.size());
    if (*lo == *hi) {
        stats.mean = *lo;
        stats.stddev = 0.0;
        return stats;
    }
    double sq = 0.0;
    for (double v : values) sq += (v - stats.mean) * (v - stats.mean);
    stats.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return stats;
}

double normalize_value(double raw, const NormalizationStats& stats) noexcept {
    if (stats.stddev == 0.0) return 0.0;
    return (raw - stats.mean) / stats.stddev;
}

Volume3D apply_normalization(const Volume3D& vol, const NormalizationStats& stats) {
    Volume3D out = vol;
    for (double& v : out.data()) v = normalize_value(v, stats);
    return out;
}

Volume3D normalize(const Volume3D& vol) {
    if (vol.kind() != VolumeKind::intensity) {
        throw InvalidArgument("normalize expects an intensity volume");
    }
    if (vol.size() < 2) {
        throw InvalidArgument("normalize needs at least two voxels");
    }
    return apply_normalization(vol, normalization_stats(vol));
}

Volume3D crop(const Volume3D& vol, const BoundingBox& box, double pad_value) {
    box.validate();
    if (!same_spacing(box.spacing, vol.spacing())) {
        throw InvalidArgument("crop box spacing " + to_string(box.spacing) + " differs from volume spacing " +
                              to_string(vol.spacing()));
    }
    if (clip_to_grid(box, vol.grid()).empty) {
        throw OutOfBounds("crop box " + to_string(box.min_corner) + "-" + to_string(box.max_corner) +
                          " lies entirely outside volume of dims " + to_string(vol.dims()));
    }
    GridSpec grid;
    grid.dims = box.size();
    grid.spacing = vol.spacing();
    for (int a = 0; a < 3; ++a) {
        grid.origin[a] = vol.origin()[a] + static_cast<double>(box.min_corner[a]) * vol.spacing()[a];
    }
    Volume3D out(grid, vol.kind(), pad_value);
    const auto& d = vol.dims();
    for (std::int64_t k = 0; k < grid.dims[2]; ++k) {
        const auto sk = box.min_corner[2] + k;
        if (sk < 0 || sk >= d[2]) continue;
        for (std::int64_t j = 0; j < grid.dims[1]; ++j) {
            const auto sj = box.min_corner[1] + j;
            if (sj < 0 || sj >= d[1]) continue;
            for (std::int64_t i = 0; i < grid.dims[0]; ++i) {
                const auto si = box.min_corner[0] + i;
                if (si < 0 || si >= d[0]) continue;
                out.at(i, j, k) = vol.at(si, sj, sk);
            }
        }
    }
    return out;
}

Volume3D paste(const Volume3D& dst, const Volume3D& src, const BoundingBox& box) {
    box.validate();
    if (src.dims() != box.size()) {
        throw InvalidArgument("paste source dims " + to_string(src.dims()) + " do not match box size " +
                              to_string(box.size()));
    }
    if (!same_spacing(src.spacing(), dst.spacing()) || !same_spacing(box.spacing, dst.spacing())) {
        throw InvalidArgument("paste requires matching spacings");
    }
    Volume3D out = dst;
    const auto clipped = clip_to_grid(box, dst.grid());
    if (clipped.empty) return out;
    const auto& lo = clipped.box.min_corner;
    const auto& hi = clipped.box.max_corner;
    for (std::int64_t k = lo[2]; k < hi[2]; ++k) {
        for (std::int64_t j = lo[1]; j < hi[1]; ++j) {
            for (std::int64_t i = lo[0]; i < hi[0]; ++i) {
                out.at(i, j, k) = src.at(i - box.min_corner[0], j - box.min_corner[1], k - box.min_corner[2]);
            }
        }
    }
    return out;
}

}  // namespace organseg
