#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

#include "organseg/dataset.hpp"
#include "organseg/errors.hpp"
#include "organseg/localization.hpp"
#include "organseg/phantom.hpp"
#include "organseg/random.hpp"
#include "organseg/volume_io.hpp"

using namespace organseg;
using oracle::grid;

namespace {

PhantomSpec single_organ(double noise) {
    PhantomSpec s;
    s.canvas = grid(32, 32, 32);
    s.organs = {{1, "blob", {16.0, 16.0, 16.0}, {6.0, 5.0, 4.0}, 100.0}};
    s.noise_sigma = noise;
    s.seed = 11;
    return s;
}

}  // namespace

TEST_CASE("rng streams are fixed") {
    Rng a(123);
    Rng b(123);
    for (int n = 0; n < 100; ++n) CHECK(a.next_u64() == b.next_u64());
    Rng u(7);
    for (int n = 0; n < 1000; ++n) {
        const double x = u.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        CHECK(u.below(5) < 5);
    }
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    // std::mt19937_64 10000th output is fixed by the standard.
    Rng d(5489u);
    for (int n = 0; n < 9999; ++n) d.next_u64();
    CHECK(d.next_u64() == 9981545732273789042ull);
}

TEST_CASE("single ellipsoid centre of mass") {
    const auto p = generate_phantom(single_organ(0.0));
    double sx = 0, sy = 0, sz = 0, n = 0;
    for (std::int64_t z = 0; z < 32; ++z)
        for (std::int64_t y = 0; y < 32; ++y)
            for (std::int64_t x = 0; x < 32; ++x) {
                if (p.labels.at(x, y, z) != 1.0) continue;
                const auto c = p.labels.grid().voxel_center({x, y, z});
                sx += c[0];
                sy += c[1];
                sz += c[2];
                n += 1;
            }
    REQUIRE(n > 0);
    CHECK(std::abs(sx / n - 16.0) <= 0.5);
    CHECK(std::abs(sy / n - 16.0) <= 0.5);
    CHECK(std::abs(sz / n - 16.0) <= 0.5);
    REQUIRE(p.centroids.size() == 1);
    CHECK(p.centroids[0].centroid_mm == Vec3{16.0, 16.0, 16.0});
}

TEST_CASE("noise-free interior equals the organ intensity") {
    const auto p = generate_phantom(single_organ(0.0));
    for (std::int64_t n = 0; n < p.image.size(); ++n) {
        CHECK(p.image.data()[n] == (p.labels.data()[n] == 1.0 ? 100.0 : 0.0));
    }
}

TEST_CASE("same seed gives identical phantoms") {
    const auto a = generate_phantom(single_organ(10.0));
    const auto b = generate_phantom(single_organ(10.0));
    for (std::int64_t n = 0; n < a.image.size(); ++n) CHECK(a.image.data()[n] == b.image.data()[n]);
    auto other = single_organ(10.0);
    other.seed = 12;
    const auto c = generate_phantom(other);
    bool differs = false;
    for (std::int64_t n = 0; n < a.image.size(); ++n) differs |= a.image.data()[n] != c.image.data()[n];
    CHECK(differs);
}

TEST_CASE("later organ wins overlaps") {
    PhantomSpec s = single_organ(0.0);
    s.organs.push_back({2, "cap", {16.0, 16.0, 16.0}, {2.0, 2.0, 2.0}, 200.0});
    const auto p = generate_phantom(s);
    CHECK(p.labels.at(15, 15, 15) == 2.0);
    CHECK(p.image.at(15, 15, 15) == 200.0);
    CHECK(p.labels.at(20, 15, 15) == 1.0);
}

TEST_CASE("phantom spec validation") {
    PhantomSpec s = single_organ(0.0);
    s.organs.clear();
    CHECK_THROWS_AS(generate_phantom(s), InvalidArgument);
    s = single_organ(0.0);
    s.organs[0].id = 2;
    CHECK_THROWS_AS(generate_phantom(s), InvalidArgument);
    s = single_organ(0.0);
    s.organs[0].semi_axes_mm[1] = 0.0;
    CHECK_THROWS_AS(generate_phantom(s), InvalidArgument);
    s = single_organ(0.0);
    s.organs[0].center_mm = {200.0, 16.0, 16.0};
    CHECK_THROWS_AS(generate_phantom(s), InvalidArgument);
}

TEST_CASE("tight box contains the specified centre") {
    const auto p = generate_phantom(default_phantom_template());
    for (const auto& organ : default_phantom_template().organs) {
        const auto box = tight_box(p.labels, organ.id);
        REQUIRE(box.has_value());
        CHECK(box->contains(p.labels.grid().voxel_containing(organ.center_mm)));
    }
}

TEST_CASE("corpus layout and split") {
    oracle::TempDir dir("corpus");
    CorpusOptions o;
    o.seed = 3;
    o.jitter = {2.0, 0.1};
    const auto m = generate_corpus(o, dir.path());
    CHECK(m.members.size() == 10);
    CHECK(m.split(kTrainSplit).size() == 7);
    CHECK(m.split(kTestSplit).size() == 3);
    CHECK(m.organs.size() == 3);
    CHECK(std::filesystem::exists(dir.path() / "manifest.json"));
    CHECK(std::filesystem::exists(dir.path() / "vol_0000.img"));
    CHECK(std::filesystem::exists(dir.path() / "vol_0000.img.json"));
    CHECK(std::filesystem::exists(dir.path() / "vol_0009.lbl.json"));
    CHECK(std::filesystem::exists(dir.path() / "vol_0009.centroids.json"));

    const auto back = read_manifest(dir.path());
    CHECK(back.members.size() == 10);
    CHECK(back.members[7].split == "test");
    CHECK(back.organs[2].name == "spleen");
}

TEST_CASE("corpus generation is reproducible") {
    oracle::TempDir a("corpus_a");
    oracle::TempDir b("corpus_b");
    CorpusOptions o;
    o.n_volumes = 3;
    o.n_train = 2;
    o.seed = 9;
    o.jitter = {2.0, 0.1};
    generate_corpus(o, a.path());
    generate_corpus(o, b.path());
    CHECK(oracle::tree_contents(a.path()) == oracle::tree_contents(b.path()));
}

TEST_CASE("zero jitter members share the template geometry") {
    oracle::TempDir dir("corpus_zero");
    CorpusOptions o;
    o.n_volumes = 3;
    o.n_train = 2;
    o.seed = 4;
    const auto m = generate_corpus(o, dir.path());
    const auto reference = generate_phantom(default_phantom_template());
    for (const auto& member : m.members) {
        const auto labels = read_volume(m.resolve(member.labels));
        for (std::int64_t n = 0; n < labels.size(); ++n) CHECK(labels.data()[n] == reference.labels.data()[n]);
        const auto c = read_centroids(m.resolve(member.centroids));
        for (std::size_t k = 0; k < c.size(); ++k) CHECK(c[k].centroid_mm == reference.centroids[k].centroid_mm);
    }
}

TEST_CASE("mean box size approaches twice the semi-axes as jitter vanishes") {
    const auto templ = default_phantom_template();
    for (double f : {0.1, 0.0}) {
        CorpusOptions o;
        o.n_volumes = 6;
        o.n_train = 6;
        o.seed = 21;
        o.jitter = {0.0, f};
        std::vector<Volume3D> labels;
        std::vector<Vec3> mean_axes(templ.organs.size(), Vec3{0, 0, 0});
        for (std::size_t i = 0; i < o.n_volumes; ++i) {
            const auto spec = corpus_member_spec(o, i);
            labels.push_back(generate_phantom(spec).labels);
            for (std::size_t k = 0; k < spec.organs.size(); ++k)
                for (int a = 0; a < 3; ++a) mean_axes[k][a] += spec.organs[k].semi_axes_mm[a] / 6.0;
        }
        const auto stats = compute_organ_stats(labels, templ.catalog());
        for (std::size_t k = 0; k < templ.organs.size(); ++k) {
            const auto& s = stats.at(templ.organs[k].id).mean_size_mm;
            for (int a = 0; a < 3; ++a) CHECK(std::abs(s[a] - 2.0 * mean_axes[k][a]) <= 1.0);
        }
    }
}

TEST_CASE("jitter that can leave the canvas is rejected by name") {
    CorpusOptions o;
    o.jitter = {30.0, 0.0};
    try {
        validate_corpus_options(o);
        FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("liver") != std::string::npos);
    }
    o.jitter = {2.0, 0.1};
    CHECK_NOTHROW(validate_corpus_options(o));
    o.n_train = 11;
    CHECK_THROWS_AS(validate_corpus_options(o), InvalidArgument);
}
