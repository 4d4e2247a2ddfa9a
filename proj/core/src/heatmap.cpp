#include "organseg/heatmap.hpp"

#include <cmath>

#include "json_util.hpp"
#include "organseg/errors.hpp"
#include "organseg/volume_io.hpp"

namespace organseg {

bool HeatmapStack::same_shape(const HeatmapStack& other) const {
    if (channels.size() != other.channels.size() || organ_ids != other.organ_ids) return false;
    for (std::size_t n = 0; n < channels.size(); ++n) {
        if (!same_grid(channels[n].grid(), other.channels[n].grid())) return false;
    }
    return true;
}

HeatmapStack synthesize_heatmaps(const CentroidSet& centroids, const GridSpec& grid, double sigma_sq) {
    if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq)) {
        throw InvalidArgument("sigma_sq must be positive, got " + std::to_string(sigma_sq));
    }
    grid.validate();
    HeatmapStack stack;
    stack.sigma_sq = sigma_sq;
    const double inv = 1.0 / (2.0 * sigma_sq);
    for (const auto& c : centroids) {
        Volume3D channel(grid, VolumeKind::heatmap, 0.0);
        if (c.centroid_mm) {
            const Vec3 mu = *c.centroid_mm;
            // Squared per-axis offsets; the exponent is their sum.
            std::array<std::vector<double>, 3> factors;
            for (int a = 0; a < 3; ++a) {
                factors[a].resize(static_cast<std::size_t>(grid.dims[a]));
                for (std::int64_t n = 0; n < grid.dims[a]; ++n) {
                    const double x = grid.origin[a] + (static_cast<double>(n) + 0.5) * grid.spacing[a];
                    factors[a][static_cast<std::size_t>(n)] = (x - mu[a]) * (x - mu[a]);
                }
            }
            for (std::int64_t k = 0; k < grid.dims[2]; ++k) {
                for (std::int64_t j = 0; j < grid.dims[1]; ++j) {
                    const double dyz = factors[1][static_cast<std::size_t>(j)] + factors[2][static_cast<std::size_t>(k)];
                    for (std::int64_t i = 0; i < grid.dims[0]; ++i) {
                        channel.at(i, j, k) = std::exp(-(factors[0][static_cast<std::size_t>(i)] + dyz) * inv);
                    }
                }
            }
        }
        stack.channels.push_back(std::move(channel));
        stack.organ_ids.push_back(c.id);
    }
    return stack;
}

namespace {

void require_same_shape(const HeatmapStack& truth, const HeatmapStack& pred) {
    if (truth.channels.empty() || !truth.same_shape(pred)) {
        throw InvalidArgument("heatmap stacks differ in shape (channels, organ ids or grids)");
    }
}

}  // namespace

double l2_loss(const HeatmapStack& truth, const HeatmapStack& pred) {
    require_same_shape(truth, pred);
    double sum = 0.0;
    std::int64_t count = 0;
    for (std::size_t c = 0; c < truth.channels.size(); ++c) {
        const auto t = truth.channels[c].data();
        const auto p = pred.channels[c].data();
        for (std::size_t n = 0; n < t.size(); ++n) {
            const double d = t[n] - p[n];
            sum += d * d;
        }
        count += static_cast<std::int64_t>(t.size());
    }
    return sum / static_cast<double>(count);
}

HeatmapStack l2_loss_grad(const HeatmapStack& truth, const HeatmapStack& pred) {
    require_same_shape(truth, pred);
    const double scale =
        2.0 / static_cast<double>(truth.channels.front().size() * static_cast<std::int64_t>(truth.channels.size()));
    HeatmapStack grad = pred;
    for (std::size_t c = 0; c < truth.channels.size(); ++c) {
        const auto t = truth.channels[c].data();
        const auto p = pred.channels[c].data();
        auto g = grad.channels[c].data();
        for (std::size_t n = 0; n < t.size(); ++n) g[n] = scale * (p[n] - t[n]);
        grad.channels[c] = grad.channels[c].with_kind(VolumeKind::intensity);
    }
    return grad;
}

void write_heatmap_stack(const std::filesystem::path& prefix, const HeatmapStack& stack) {
    detail::json ids = detail::json::array();
    detail::json files = detail::json::array();
    for (std::size_t c = 0; c < stack.channels.size(); ++c) {
        const auto name = prefix.filename().string() + ".ch" + std::to_string(stack.organ_ids[c]) + ".img";
        write_volume(prefix.parent_path() / name, stack.channels[c]);
        ids.push_back(stack.organ_ids[c]);
        files.push_back(name);
    }
    detail::write_json_file(prefix.string() + ".stack.json",
                            {{"organ_ids", ids}, {"sigma_sq", stack.sigma_sq}, {"channels", files}});
}

HeatmapStack read_heatmap_stack(const std::filesystem::path& prefix) {
    const auto doc = detail::read_json_file(prefix.string() + ".stack.json");
    HeatmapStack stack;
    try {
        stack.sigma_sq = doc.at("sigma_sq").get<double>();
        for (const auto& id : doc.at("organ_ids")) stack.organ_ids.push_back(id.get<int>());
        for (const auto& file : doc.at("channels")) {
            stack.channels.push_back(read_volume(prefix.parent_path() / file.get<std::string>()));
        }
    } catch (const detail::json::exception& e) {
        throw InvalidArgument("bad heatmap stack " + prefix.string() + ": " + e.what());
    }
    return stack;
}

}  // namespace organseg
