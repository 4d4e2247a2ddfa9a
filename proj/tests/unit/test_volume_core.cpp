#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"

#include "organseg/errors.hpp"
#include "organseg/geometry.hpp"
#include "organseg/volume.hpp"
#include "organseg/volume_io.hpp"

using namespace organseg;
using oracle::grid;

namespace {

Volume3D ramp(const GridSpec& g, double ax, double ay, double az, double c) {
    Volume3D v(g, VolumeKind::intensity);
    for (std::int64_t z = 0; z < g.dims[2]; ++z)
        for (std::int64_t y = 0; y < g.dims[1]; ++y)
            for (std::int64_t x = 0; x < g.dims[0]; ++x) {
                const auto p = g.voxel_center({x, y, z});
                v.at(x, y, z) = ax * p[0] + ay * p[1] + az * p[2] + c;
            }
    return v;
}

}  // namespace

TEST_CASE("grid and box basics") {
    const auto g = grid(4, 5, 6, 2.0, {10.0, 0.0, -4.0});
    CHECK(g.voxel_count() == 120);
    const auto c = g.voxel_center({1, 2, 3});
    CHECK(c[0] == doctest::Approx(13.0));
    CHECK(c[1] == doctest::Approx(5.0));
    CHECK(c[2] == doctest::Approx(3.0));
    CHECK(g.voxel_containing(c) == Index3{1, 2, 3});
    CHECK_FALSE(g.contains({4, 0, 0}));

    BoundingBox b{{1, 1, 1}, {3, 4, 5}, {2.0, 2.0, 2.0}};
    CHECK(b.size() == Dims3{2, 3, 4});
    CHECK(b.size_mm() == Vec3{4.0, 6.0, 8.0});
    BoundingBox bad{{2, 0, 0}, {2, 1, 1}, {1.0, 1.0, 1.0}};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    GridSpec neg = grid(2, 2, 2, -1.0);
    CHECK_THROWS_AS(neg.validate(), InvalidArgument);
}

TEST_CASE("map_box goes through world coordinates") {
    const auto coarse = grid(20, 20, 20, 3.0);
    const auto fine = grid(60, 60, 60, 1.0);
    const BoundingBox b{{2, 3, 4}, {5, 7, 9}, coarse.spacing};
    const auto m = map_box(b, coarse, fine);
    CHECK(m.min_corner == Index3{6, 9, 12});
    CHECK(m.max_corner == Index3{15, 21, 27});
    CHECK(m.spacing == fine.spacing);
    // Clamped to the target grid.
    const auto edge = map_box(BoundingBox{{18, 0, 0}, {20, 2, 2}, coarse.spacing}, coarse, grid(58, 58, 58, 1.0));
    CHECK(edge.max_corner[0] == 58);
}

TEST_CASE("resample identity and dims") {
    oracle::TestRng rng(1);
    const auto v = oracle::random_volume(grid(5, 4, 3, 2.0), VolumeKind::intensity, rng, -5, 5);
    const auto same = resample(v, v.spacing(), Interpolation::trilinear);
    CHECK(same.dims() == v.dims());
    for (std::int64_t n = 0; n < v.size(); ++n) CHECK(same.data()[n] == v.data()[n]);

    const Volume3D big(grid(60, 60, 60, 1.0), VolumeKind::intensity, 1.0);
    const auto r = resample(big, {3.0, 3.0, 3.0}, Interpolation::trilinear);
    CHECK(r.dims() == Dims3{20, 20, 20});
    CHECK(r.origin() == big.origin());
    CHECK(r.kind() == VolumeKind::intensity);

    const Volume3D odd(grid(10, 7, 4, 1.0), VolumeKind::intensity, 0.0);
    CHECK(resample(odd, {3.0, 3.0, 3.0}, Interpolation::nearest).dims() == Dims3{4, 3, 2});
}

TEST_CASE("resample errors") {
    const Volume3D labels(grid(4, 4, 4), VolumeKind::label, 1.0);
    CHECK_THROWS_AS(resample(labels, {2.0, 2.0, 2.0}, Interpolation::trilinear), InvalidArgument);
    CHECK_NOTHROW(resample(labels, {2.0, 2.0, 2.0}, Interpolation::nearest));
    const Volume3D img(grid(4, 4, 4), VolumeKind::intensity, 1.0);
    CHECK_THROWS_AS(resample(img, {0.0, 1.0, 1.0}, Interpolation::trilinear), InvalidArgument);
    CHECK_THROWS_AS(resample(img, {-1.0, 1.0, 1.0}, Interpolation::nearest), InvalidArgument);
}

TEST_CASE("trilinear reproduces affine fields") {
    const auto g = grid(30, 24, 18, 1.0, {-3.0, 2.0, 5.0});
    const auto v = ramp(g, 0.7, -1.3, 2.1, 4.0);
    const auto r = resample(v, {2.0, 2.0, 2.0}, Interpolation::trilinear);
    // Interior samples: target centres whose source coordinate lies between source centres.
    for (std::int64_t z = 1; z + 1 < r.dims()[2]; ++z)
        for (std::int64_t y = 1; y + 1 < r.dims()[1]; ++y)
            for (std::int64_t x = 1; x + 1 < r.dims()[0]; ++x) {
                const auto p = r.grid().voxel_center({x, y, z});
                CHECK(std::abs(r.at(x, y, z) - (0.7 * p[0] - 1.3 * p[1] + 2.1 * p[2] + 4.0)) < 1e-6);
            }

    // Down and back up: affine field survives away from the clamped border.
    const auto fine = ramp(grid(24, 24, 24, 1.0), 1.0, 2.0, -0.5, 0.0);
    const auto back = resample(resample(fine, {2.0, 2.0, 2.0}, Interpolation::trilinear), {1.0, 1.0, 1.0},
                               Interpolation::trilinear);
    REQUIRE(back.dims() == fine.dims());
    for (std::int64_t z = 2; z < 22; ++z)
        for (std::int64_t y = 2; y < 22; ++y)
            for (std::int64_t x = 2; x < 22; ++x) CHECK(std::abs(back.at(x, y, z) - fine.at(x, y, z)) < 1e-5);
}

TEST_CASE("nearest keeps label values") {
    oracle::TestRng rng(2);
    Volume3D labels(grid(9, 9, 9), VolumeKind::label);
    for (auto& x : labels.data()) x = static_cast<double>(rng.integer(0, 3));
    const auto r = resample(labels, {3.0, 3.0, 3.0}, Interpolation::nearest);
    CHECK(r.kind() == VolumeKind::label);
    // Target centre (3i+1.5) falls on source voxel 3i+1.
    for (std::int64_t z = 0; z < 3; ++z)
        for (std::int64_t y = 0; y < 3; ++y)
            for (std::int64_t x = 0; x < 3; ++x) CHECK(r.at(x, y, z) == labels.at(3 * x + 1, 3 * y + 1, 3 * z + 1));
}

TEST_CASE("normalize") {
    const Volume3D flat(grid(3, 3, 3), VolumeKind::intensity, 5.0);
    const auto zeros = normalize(flat);
    for (double x : zeros.data()) CHECK(x == 0.0);

    Volume3D two(grid(2, 2, 2), VolumeKind::intensity);
    for (std::int64_t n = 0; n < two.size(); ++n) two.data()[n] = n % 2 == 0 ? 0.0 : 2.0;
    const auto pm = normalize(two);
    for (double x : pm.data()) CHECK(std::abs(std::abs(x) - 1.0) < 1e-12);

    oracle::TestRng rng(3);
    const auto v = oracle::random_volume(grid(7, 6, 5), VolumeKind::intensity, rng, -300, 900);
    const auto n = normalize(v);
    long double s = 0.0L;
    for (double x : n.data()) s += x;
    const long double mean = s / n.size();
    long double ss = 0.0L;
    for (double x : n.data()) ss += (x - mean) * (x - mean);
    CHECK(std::abs(static_cast<double>(mean)) < 1e-6);
    CHECK(std::abs(std::sqrt(static_cast<double>(ss / n.size())) - 1.0) < 1e-6);

    const auto nn = normalize(n);
    for (std::int64_t i = 0; i < n.size(); ++i) CHECK(std::abs(nn.data()[i] - n.data()[i]) < 1e-6);

    CHECK_THROWS_AS(normalize(Volume3D(grid(2, 2, 2), VolumeKind::probability, 0.5)), InvalidArgument);
    CHECK_THROWS_AS(normalize(Volume3D(grid(1, 1, 1), VolumeKind::intensity, 0.5)), InvalidArgument);
}

TEST_CASE("crop and paste") {
    oracle::TestRng rng(4);
    const auto g = grid(6, 5, 4, 2.0, {1.0, 2.0, 3.0});
    const auto v = oracle::random_volume(g, VolumeKind::intensity, rng, 0, 10);

    const auto full = crop(v, full_box(g));
    CHECK(full.dims() == v.dims());
    CHECK(full.origin() == v.origin());
    for (std::int64_t n = 0; n < v.size(); ++n) CHECK(full.data()[n] == v.data()[n]);

    const BoundingBox over{{2, 0, 0}, {8, 5, 4}, g.spacing};
    const auto padded = crop(v, over, -1024.0);
    CHECK(padded.dims() == Dims3{6, 5, 4});
    CHECK(padded.origin()[0] == doctest::Approx(5.0));
    for (std::int64_t z = 0; z < 4; ++z)
        for (std::int64_t y = 0; y < 5; ++y) {
            CHECK(padded.at(4, y, z) == -1024.0);
            CHECK(padded.at(5, y, z) == -1024.0);
            CHECK(padded.at(0, y, z) == v.at(2, y, z));
        }

    const BoundingBox outside{{7, 0, 0}, {9, 2, 2}, g.spacing};
    CHECK_THROWS_AS(crop(v, outside), OutOfBounds);
    const BoundingBox wrong_spacing{{0, 0, 0}, {2, 2, 2}, {1.0, 1.0, 1.0}};
    CHECK_THROWS_AS(crop(v, wrong_spacing), InvalidArgument);

    // crop -> paste into zeros -> interior recovered.
    const BoundingBox inner{{1, 1, 1}, {4, 4, 3}, g.spacing};
    const auto c = crop(v, inner);
    const auto pasted = paste(Volume3D(g, VolumeKind::intensity, 0.0), c, inner);
    for (std::int64_t z = 0; z < 4; ++z)
        for (std::int64_t y = 0; y < 5; ++y)
            for (std::int64_t x = 0; x < 6; ++x)
                CHECK(pasted.at(x, y, z) == (inner.contains({x, y, z}) ? v.at(x, y, z) : 0.0));

    // paste into its own source is the identity; paste then crop recovers src.
    const auto self = paste(v, c, inner);
    for (std::int64_t n = 0; n < v.size(); ++n) CHECK(self.data()[n] == v.data()[n]);
    const auto src = oracle::random_volume(GridSpec{inner.size(), g.spacing, {}}, VolumeKind::intensity, rng, 0, 1);
    const auto again = crop(paste(v, src, inner), inner);
    for (std::int64_t n = 0; n < src.size(); ++n) CHECK(again.data()[n] == src.data()[n]);

    // Fully out of bounds: dst untouched. Size mismatch: error.
    const auto untouched = paste(v, crop(v, inner), BoundingBox{{10, 10, 10}, {13, 13, 12}, g.spacing});
    for (std::int64_t n = 0; n < v.size(); ++n) CHECK(untouched.data()[n] == v.data()[n]);
    CHECK_THROWS_AS(paste(v, c, full_box(g)), InvalidArgument);
}

TEST_CASE("volume validate enforces kind ranges") {
    CHECK_THROWS_AS(Volume3D(grid(2, 2, 2), VolumeKind::probability, 1.5).validate(), InvalidArgument);
    CHECK_THROWS_AS(Volume3D(grid(2, 2, 2), VolumeKind::label, 0.5).validate(), InvalidArgument);
    CHECK_THROWS_AS(Volume3D(grid(2, 2, 2), VolumeKind::label, 4.0).validate(3), InvalidArgument);
    CHECK_NOTHROW(Volume3D(grid(2, 2, 2), VolumeKind::label, 3.0).validate(3));
    CHECK_THROWS_AS(Volume3D(grid(2, 2, 2), VolumeKind::intensity, std::vector<double>(7, 0.0)), InvalidArgument);
}

TEST_CASE("volume files round-trip bit-exactly") {
    oracle::TempDir dir("volio");
    oracle::TestRng rng(5);
    auto img = oracle::random_volume(grid(5, 3, 2, 1.5, {0.25, -1.0, 7.0}), VolumeKind::intensity, rng, -2000, 2000);
    // Values exactly representable in float32 survive unchanged.
    for (auto& x : img.data()) x = static_cast<double>(static_cast<float>(x));
    write_volume(dir.path() / "a.img", img);
    const auto back = read_volume(dir.path() / "a.img");
    CHECK(back.dims() == img.dims());
    CHECK(back.spacing() == img.spacing());
    CHECK(back.origin() == img.origin());
    CHECK(back.kind() == img.kind());
    for (std::int64_t n = 0; n < img.size(); ++n) CHECK(back.data()[n] == img.data()[n]);
    CHECK(std::filesystem::file_size(dir.path() / "a.img") == 30 * 4);

    Volume3D labels(grid(4, 4, 4), VolumeKind::label);
    for (std::int64_t n = 0; n < labels.size(); ++n) labels.data()[n] = static_cast<double>(n % 4);
    write_volume(dir.path() / "l.lbl", labels);
    CHECK(std::filesystem::file_size(dir.path() / "l.lbl") == 64 * 2);
    const auto lb = read_volume(dir.path() / "l.lbl");
    for (std::int64_t n = 0; n < labels.size(); ++n) CHECK(lb.data()[n] == labels.data()[n]);

    // Re-writing what was read gives the same bytes.
    write_volume(dir.path() / "b.img", back);
    CHECK(oracle::file_bytes(dir.path() / "a.img") == oracle::file_bytes(dir.path() / "b.img"));
    CHECK(oracle::file_bytes(sidecar_path(dir.path() / "a.img")) == oracle::file_bytes(sidecar_path(dir.path() / "b.img")));

    const BoundingBox box{{1, 2, 3}, {6, 5, 5}, {1.5, 1.5, 1.5}};
    const Volume3D prob(GridSpec{box.size(), box.spacing, {}}, VolumeKind::probability, 0.25);
    write_volume(dir.path() / "c.prob", prob, CropAnnotation{2, box});
    const auto annotated = read_annotated_volume(dir.path() / "c.prob");
    REQUIRE(annotated.crop.has_value());
    CHECK(annotated.crop->organ_id == 2);
    CHECK(annotated.crop->box == box);

    CHECK_THROWS_AS(read_volume(dir.path() / "missing.img"), IoError);
}

TEST_CASE("little-endian packing") {
    const std::vector<double> v{1.0, -2.5};
    const auto b = pack_float32_le(v);
    REQUIRE(b.size() == 8);
    // 1.0f = 0x3F800000
    CHECK(b[0] == 0x00);
    CHECK(b[3] == 0x3F);
    CHECK(unpack_float32_le(b) == v);
    CHECK(unpack_float64_le(pack_float64_le(v)) == v);
}
