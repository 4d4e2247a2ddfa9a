#include "organseg/localization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json_util.hpp"
#include "organseg/errors.hpp"

namespace organseg {

using detail::json;

const OrganSizeStats& OrganStats::at(int organ_id) const {
    const auto it = organs.find(organ_id);
    if (it == organs.end()) {
        throw MissingStatistics(organ_id, "no bounding-box statistics for organ " + std::to_string(organ_id));
    }
    return it->second;
}

std::optional<BoundingBox> tight_box(const Volume3D& labels, int organ_id) {
    Index3 lo{std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::max(),
              std::numeric_limits<std::int64_t>::max()};
    Index3 hi{-1, -1, -1};
    const auto& d = labels.dims();
    const auto values = labels.data();
    std::size_t n = 0;
    for (std::int64_t k = 0; k < d[2]; ++k) {
        for (std::int64_t j = 0; j < d[1]; ++j) {
            for (std::int64_t i = 0; i < d[0]; ++i, ++n) {
                if (values[n] != organ_id) continue;
                lo = {std::min(lo[0], i), std::min(lo[1], j), std::min(lo[2], k)};
                hi = {std::max(hi[0], i), std::max(hi[1], j), std::max(hi[2], k)};
            }
        }
    }
    if (hi[0] < 0) return std::nullopt;
    return BoundingBox{lo, {hi[0] + 1, hi[1] + 1, hi[2] + 1}, labels.spacing()};
}

OrganStats compute_organ_stats(std::span<const Volume3D> label_maps, const OrganCatalog& catalog) {
    OrganStats stats;
    for (const auto& organ : catalog) {
        OrganSizeStats s;
        for (const auto& labels : label_maps) {
            const auto box = tight_box(labels, organ.id);
            if (!box) continue;
            const auto size = box->size_mm();
            for (int a = 0; a < 3; ++a) s.mean_size_mm[a] += size[a];
            ++s.count;
        }
        if (s.count == 0) {
            throw MissingStatistics(organ.id, "organ " + std::to_string(organ.id) + " ('" + organ.name +
                                                  "') does not occur in any training label map");
        }
        for (double& v : s.mean_size_mm) v /= static_cast<double>(s.count);
        stats.organs[organ.id] = s;
    }
    return stats;
}

void write_organ_stats(const std::filesystem::path& path, const OrganStats& stats) {
    json doc = json::object();
    for (const auto& [id, s] : stats.organs) {
        doc[std::to_string(id)] = {{"mean_size_mm", detail::to_json(s.mean_size_mm)}, {"count", s.count}};
    }
    detail::write_json_file(path, doc);
}

OrganStats read_organ_stats(const std::filesystem::path& path) {
    const json doc = detail::read_json_file(path);
    OrganStats stats;
    try {
        for (const auto& [key, value] : doc.items()) {
            OrganSizeStats s;
            s.mean_size_mm = detail::vec3_from_json(value.at("mean_size_mm"), "mean_size_mm");
            s.count = value.at("count").get<std::size_t>();
            stats.organs[std::stoi(key)] = s;
        }
    } catch (const std::exception& e) {
        throw InvalidArgument("bad organ stats file " + path.string() + ": " + e.what());
    }
    return stats;
}

CentroidEstimate extract_centroid(const Volume3D& channel, double tau, CentroidMode mode) {
    CentroidEstimate est;
    const auto values = channel.data();
    if (values.empty()) return est;
    est.peak = *std::max_element(values.begin(), values.end());
    if (!(est.peak >= tau)) return est;

    // Label 26-connected components of the supra-threshold set with an explicit stack.
    std::vector<std::int32_t> component(values.size(), -1);
    std::vector<std::int64_t> stack;
    std::vector<std::int64_t> best_members;
    std::vector<std::int64_t> members;
    std::int32_t next_label = 0;
    for (std::size_t seed = 0; seed < values.size(); ++seed) {
        if (values[seed] < tau || component[seed] >= 0) continue;
        members.clear();
        component[seed] = next_label;
        stack.push_back(static_cast<std::int64_t>(seed));
        while (!stack.empty()) {
            const auto cur = stack.back();
            stack.pop_back();
            members.push_back(cur);
            const auto idx = channel.index_of(cur);
            for (int dz = -1; dz <= 1; ++dz) {
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const Index3 nb{idx[0] + dx, idx[1] + dy, idx[2] + dz};
                        if (!channel.grid().contains(nb)) continue;
                        const auto lin = channel.linear_index(nb[0], nb[1], nb[2]);
                        auto& c = component[static_cast<std::size_t>(lin)];
                        if (c >= 0 || values[static_cast<std::size_t>(lin)] < tau) continue;
                        c = next_label;
                        stack.push_back(lin);
                    }
                }
            }
        }
        if (members.size() > best_members.size()) best_members = members;
        ++next_label;
    }

    est.found = true;
    est.region_voxels = best_members.size();
    if (mode == CentroidMode::voxel_mean) {
        Vec3 sum{0.0, 0.0, 0.0};
        for (auto lin : best_members) {
            const auto c = channel.grid().voxel_center(channel.index_of(lin));
            for (int a = 0; a < 3; ++a) sum[a] += c[a];
        }
        for (int a = 0; a < 3; ++a) est.centroid_mm[a] = sum[a] / static_cast<double>(best_members.size());
    } else {
        Index3 lo = channel.index_of(best_members.front());
        Index3 hi = lo;
        for (auto lin : best_members) {
            const auto idx = channel.index_of(lin);
            for (int a = 0; a < 3; ++a) {
                lo[a] = std::min(lo[a], idx[a]);
                hi[a] = std::max(hi[a], idx[a]);
            }
        }
        const auto a_c = channel.grid().voxel_center(lo);
        const auto b_c = channel.grid().voxel_center(hi);
        for (int a = 0; a < 3; ++a) est.centroid_mm[a] = 0.5 * (a_c[a] + b_c[a]);
    }
    return est;
}

BoundingBox make_box(const Vec3& centroid_mm, const OrganStats& stats, int organ_id, int margin_voxels,
                     const GridSpec& grid) {
    if (margin_voxels < 0) throw InvalidArgument("margin must be non-negative");
    const auto& size = stats.at(organ_id).mean_size_mm;
    const auto center = grid.voxel_containing(centroid_mm);
    if (!grid.contains(center)) {
        throw OutOfBounds("centroid " + to_string(centroid_mm) + " of organ " + std::to_string(organ_id) +
                          " lies outside the grid");
    }
    BoundingBox box;
    box.spacing = grid.spacing;
    for (int a = 0; a < 3; ++a) {
        // Tolerate rounding noise in averaged sizes: 15.0000000001 mm / 3 mm stays 5 voxels.
        const auto half = static_cast<std::int64_t>(std::ceil(size[a] / 2.0 / grid.spacing[a] - 1e-9));
        box.min_corner[a] = std::max<std::int64_t>(0, center[a] - half - margin_voxels);
        box.max_corner[a] = std::min<std::int64_t>(grid.dims[a], center[a] + half + margin_voxels + 1);
    }
    return box;
}

const OrganLocalization* LocalizationResult::find(int organ_id) const noexcept {
    for (const auto& o : organs) {
        if (o.organ_id == organ_id) return &o;
    }
    return nullptr;
}

LocalizationResult localize_all(const HeatmapStack& pred, const OrganStats& stats, const OrganCatalog& catalog,
                                const LocalizationOptions& options) {
    if (pred.size() != catalog.size()) {
        throw InvalidArgument("heatmap stack has " + std::to_string(pred.size()) + " channels but the catalog lists " +
                              std::to_string(catalog.size()) + " organs");
    }
    LocalizationResult result;
    result.grid = pred.grid();
    for (std::size_t c = 0; c < catalog.size(); ++c) {
        OrganLocalization loc;
        loc.organ_id = catalog[c].id;
        const auto est = extract_centroid(pred.channels[c], options.tau, options.mode);
        loc.peak = est.peak;
        if (est.found) {
            loc.status = OrganStatus::found;
            loc.centroid_mm = est.centroid_mm;
            loc.box = make_box(est.centroid_mm, stats, loc.organ_id, options.margin_voxels, pred.channels[c].grid());
        }
        result.organs.push_back(loc);
    }
    return result;
}

void write_localization(const std::filesystem::path& path, const LocalizationResult& result) {
    json organs = json::array();
    for (const auto& o : result.organs) {
        json entry{{"organ_id", o.organ_id},
                   {"status", o.status == OrganStatus::found ? "found" : "absent"},
                   {"peak", o.peak}};
        if (o.status == OrganStatus::found) {
            entry["centroid_mm"] = detail::to_json(o.centroid_mm);
            if (o.box) {
                entry["box_min"] = detail::to_json(o.box->min_corner);
                entry["box_max"] = detail::to_json(o.box->max_corner);
            }
        }
        organs.push_back(entry);
    }
    json doc{{"grid",
              {{"dims", detail::to_json(result.grid.dims)},
               {"spacing", detail::to_json(result.grid.spacing)},
               {"origin", detail::to_json(result.grid.origin)}}},
             {"organs", organs}};
    detail::write_json_file(path, doc);
}

LocalizationResult read_localization(const std::filesystem::path& path) {
    const json doc = detail::read_json_file(path);
    LocalizationResult result;
    try {
        result.grid.dims = detail::index3_from_json(doc.at("grid").at("dims"), "dims");
        result.grid.spacing = detail::vec3_from_json(doc.at("grid").at("spacing"), "spacing");
        result.grid.origin = detail::vec3_from_json(doc.at("grid").at("origin"), "origin");
        for (const auto& entry : doc.at("organs")) {
            OrganLocalization o;
            o.organ_id = entry.at("organ_id").get<int>();
            o.peak = entry.at("peak").get<double>();
            o.status = entry.at("status").get<std::string>() == "found" ? OrganStatus::found : OrganStatus::absent;
            if (o.status == OrganStatus::found) {
                o.centroid_mm = detail::vec3_from_json(entry.at("centroid_mm"), "centroid_mm");
                if (entry.contains("box_min")) {
                    o.box = BoundingBox{detail::index3_from_json(entry.at("box_min"), "box_min"),
                                        detail::index3_from_json(entry.at("box_max"), "box_max"),
                                        result.grid.spacing};
                }
            }
            result.organs.push_back(o);
        }
    } catch (const json::exception& e) {
        throw InvalidArgument("bad localization file " + path.string() + ": " + e.what());
    }
    return result;
}

}  // namespace organseg
