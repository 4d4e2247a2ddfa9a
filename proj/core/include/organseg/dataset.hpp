#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "organseg/geometry.hpp"

namespace organseg {

struct OrganInfo {
    int id = 0;
    std::string name;
    double intensity = 0.0;  // nominal phantom intensity, used by the oracle predictor
};

// Organ ids are 1..n in catalog order.
using OrganCatalog = std::vector<OrganInfo>;

const OrganInfo* find_organ(const OrganCatalog& catalog, int id) noexcept;

struct OrganCentroid {
    int id = 0;
    std::optional<Vec3> centroid_mm;  // nullopt: organ absent from the volume
};
using CentroidSet = std::vector<OrganCentroid>;

void write_centroids(const std::filesystem::path& path, const CentroidSet& centroids);
CentroidSet read_centroids(const std::filesystem::path& path);

inline constexpr std::string_view kTrainSplit = "train";
inline constexpr std::string_view kTestSplit = "test";

struct ManifestMember {
    std::string name;
    std::string split;
    // Relative to the manifest directory as stored on disk.
    std::string image;
    std::string labels;
    std::string centroids;
};

// `manifest.json` of a generated corpus.
struct Manifest {
    std::filesystem::path root;  // directory holding manifest.json
    std::uint64_t seed = 0;
    OrganCatalog organs;
    std::vector<ManifestMember> members;

    std::vector<ManifestMember> split(std::string_view which) const;
    std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

// Accepts either the manifest file itself or its directory.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest);

}  // namespace organseg
