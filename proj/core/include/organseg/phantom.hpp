#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "organseg/dataset.hpp"
#include "organseg/geometry.hpp"
#include "organseg/volume.hpp"

namespace organseg {

struct OrganSpec {
    int id = 0;
    std::string name;
    Vec3 center_mm{};
    Vec3 semi_axes_mm{};
    double intensity = 0.0;
};

// Synthetic CT-like canvas holding ellipsoidal organs.
struct PhantomSpec {
    GridSpec canvas;
    std::vector<OrganSpec> organs;
    double background = 0.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    // Ids contiguous from 1, positive semi-axes, non-negative noise.
    void validate() const;
    OrganCatalog catalog() const;
};

struct Phantom {
    Volume3D image;
    Volume3D labels;
    CentroidSet centroids;
};

// A voxel belongs to the last listed ellipsoid containing its centre. The image is the background
// value, replaced by the owning organ's intensity, plus Gaussian noise drawn from Rng(spec.seed)
// in linear voxel order.
Phantom generate_phantom(const PhantomSpec& spec);

// Three organs of decreasing size on a 64 mm cube at 1 mm.
PhantomSpec default_phantom_template();

struct Jitter {
    double center_mm = 0.0;      // uniform offset in [-c, c] per axis
    double size_fraction = 0.0;  // semi-axis scale uniform in [1-f, 1+f] per axis
};

struct CorpusOptions {
    std::size_t n_volumes = 10;
    std::size_t n_train = 7;  // first n_train members are train, the rest test
    PhantomSpec templ = default_phantom_template();
    Jitter jitter;
    std::uint64_t seed = 0;
};

// Throws InvalidArgument naming the organ if the worst-case jitter can push it past the canvas.
void validate_corpus_options(const CorpusOptions& options);

// Member `index` of the corpus: jittered organs and noise drawn from the stream derive_seed(seed, index).
PhantomSpec corpus_member_spec(const CorpusOptions& options, std::size_t index);

// Writes vol_XXXX.img/.lbl (+ .json sidecars), vol_XXXX.centroids.json and manifest.json.
Manifest generate_corpus(const CorpusOptions& options, const std::filesystem::path& out_dir);

std::string member_name(std::size_t index);

}  // namespace organseg
