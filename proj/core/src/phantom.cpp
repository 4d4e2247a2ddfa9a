#include "organseg/phantom.hpp"

#include <cstdio>
#include <set>

#include "organseg/errors.hpp"
#include "organseg/random.hpp"
#include "organseg/volume_io.hpp"

namespace organseg {

void PhantomSpec::validate() const {
    canvas.validate();
    if (organs.empty()) throw InvalidArgument("phantom needs at least one organ");
    for (std::size_t n = 0; n < organs.size(); ++n) {
        const auto& o = organs[n];
        if (o.id != static_cast<int>(n + 1)) {
            throw InvalidArgument("organ ids must be unique and contiguous from 1 (organ '" + o.name + "' has id " +
                                  std::to_string(o.id) + ")");
        }
        for (double a : o.semi_axes_mm) {
            if (!(a > 0.0) || !std::isfinite(a)) {
                throw InvalidArgument("organ '" + o.name + "' has a non-positive semi-axis");
            }
        }
    }
    if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be non-negative");
}

OrganCatalog PhantomSpec::catalog() const {
    OrganCatalog out;
    for (const auto& o : organs) out.push_back({o.id, o.name, o.intensity});
    return out;
}

Phantom generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    const auto& grid = spec.canvas;
    Volume3D labels(grid, VolumeKind::label, 0.0);
    std::vector<std::int64_t> counts(spec.organs.size(), 0);

    for (std::int64_t k = 0; k < grid.dims[2]; ++k) {
        for (std::int64_t j = 0; j < grid.dims[1]; ++j) {
            for (std::int64_t i = 0; i < grid.dims[0]; ++i) {
                const Vec3 p = grid.voxel_center({i, j, k});
                int owner = 0;
                for (const auto& o : spec.organs) {
                    double r = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        const double t = (p[a] - o.center_mm[a]) / o.semi_axes_mm[a];
                        r += t * t;
                    }
                    if (r <= 1.0) owner = o.id;
                }
                labels.at(i, j, k) = owner;
            }
        }
    }
    for (double v : labels.data()) {
        if (v > 0) ++counts[static_cast<std::size_t>(v) - 1];
    }
    for (std::size_t n = 0; n < spec.organs.size(); ++n) {
        if (counts[n] == 0) {
            throw InvalidArgument("organ '" + spec.organs[n].name + "' does not cover any voxel of the canvas");
        }
    }

    Volume3D image(grid, VolumeKind::intensity, spec.background);
    Rng rng(spec.seed);
    auto img = image.data();
    const auto lbl = labels.data();
    for (std::size_t n = 0; n < img.size(); ++n) {
        if (lbl[n] > 0) img[n] = spec.organs[static_cast<std::size_t>(lbl[n]) - 1].intensity;
        if (spec.noise_sigma > 0.0) img[n] += spec.noise_sigma * rng.normal();
    }

    Phantom out{std::move(image), std::move(labels), {}};
    for (const auto& o : spec.organs) out.centroids.push_back({o.id, o.center_mm});
    return out;
}

PhantomSpec default_phantom_template() {
    PhantomSpec spec;
    spec.canvas.dims = {64, 64, 64};
    spec.canvas.spacing = {1.0, 1.0, 1.0};
    spec.canvas.origin = {0.0, 0.0, 0.0};
    spec.organs = {
        {1, "liver", {22.0, 32.0, 32.0}, {13.0, 11.0, 10.0}, 100.0},
        {2, "kidney", {46.0, 44.0, 30.0}, {7.0, 6.0, 8.0}, 200.0},
        {3, "spleen", {44.0, 18.0, 34.0}, {5.0, 4.0, 4.0}, 300.0},
    };
    spec.background = 0.0;
    spec.noise_sigma = 10.0;
    spec.seed = 7;
    return spec;
}

std::string member_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "vol_%04zu", index);
    return buf;
}

void validate_corpus_options(const CorpusOptions& options) {
    options.templ.validate();
    if (options.n_train > options.n_volumes) {
        throw InvalidArgument("n_train exceeds n_volumes");
    }
    if (!(options.jitter.center_mm >= 0.0) || !(options.jitter.size_fraction >= 0.0) ||
        options.jitter.size_fraction >= 1.0) {
        throw InvalidArgument("jitter must satisfy center_mm >= 0 and 0 <= size_fraction < 1");
    }
    const auto& canvas = options.templ.canvas;
    const auto extent = canvas.extent_mm();
    for (const auto& o : options.templ.organs) {
        for (int a = 0; a < 3; ++a) {
            const double reach = options.jitter.center_mm + o.semi_axes_mm[a] * (1.0 + options.jitter.size_fraction);
            const double lo = o.center_mm[a] - reach;
            const double hi = o.center_mm[a] + reach;
            if (lo < canvas.origin[a] || hi > canvas.origin[a] + extent[a]) {
                throw InvalidArgument("jitter can move organ '" + o.name + "' (id " + std::to_string(o.id) +
                                      ") outside the canvas along axis " + std::to_string(a));
            }
        }
    }
}

PhantomSpec corpus_member_spec(const CorpusOptions& options, std::size_t index) {
    PhantomSpec spec = options.templ;
    Rng rng(derive_seed(options.seed, index));
    for (auto& o : spec.organs) {
        for (int a = 0; a < 3; ++a) {
            o.center_mm[a] += rng.uniform(-options.jitter.center_mm, options.jitter.center_mm);
        }
        for (int a = 0; a < 3; ++a) {
            o.semi_axes_mm[a] *= rng.uniform(1.0 - options.jitter.size_fraction, 1.0 + options.jitter.size_fraction);
        }
    }
    spec.seed = rng.next_u64();
    return spec;
}

Manifest generate_corpus(const CorpusOptions& options, const std::filesystem::path& out_dir) {
    validate_corpus_options(options);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError(out_dir.string(), "cannot create corpus directory");

    Manifest manifest;
    manifest.root = out_dir;
    manifest.seed = options.seed;
    manifest.organs = options.templ.catalog();
    for (std::size_t n = 0; n < options.n_volumes; ++n) {
        const auto spec = corpus_member_spec(options, n);
        const auto phantom = generate_phantom(spec);
        ManifestMember member;
        member.name = member_name(n);
        member.split = std::string(n < options.n_train ? kTrainSplit : kTestSplit);
        member.image = member.name + ".img";
        member.labels = member.name + ".lbl";
        member.centroids = member.name + ".centroids.json";
        write_volume(out_dir / member.image, phantom.image);
        write_volume(out_dir / member.labels, phantom.labels);
        write_centroids(out_dir / member.centroids, phantom.centroids);
        manifest.members.push_back(member);
    }
    write_manifest(manifest);
    return manifest;
}

}  // namespace organseg
