#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "organseg/geometry.hpp"
#include "organseg/volume.hpp"

namespace organseg {

// On-disk volume: a raw payload file plus a JSON sidecar at `<payload>.json`.
//
// Sidecar keys: dims, spacing, origin, kind, dtype ("float32" | "uint16"), order ("x-fastest"),
// endian ("little"); probability crops add organ_id, box_min, box_max. The payload holds
// dims[0]*dims[1]*dims[2] little-endian samples in x-fastest order. Label volumes use uint16,
// everything else float32 (in-memory doubles are narrowed on write).
struct CropAnnotation {
    int organ_id = 0;
    BoundingBox box;
};

struct AnnotatedVolume {
    Volume3D volume;
    std::optional<CropAnnotation> crop;
};

std::filesystem::path sidecar_path(const std::filesystem::path& payload);

void write_volume(const std::filesystem::path& payload, const Volume3D& vol,
                  const std::optional<CropAnnotation>& crop = std::nullopt);
Volume3D read_volume(const std::filesystem::path& payload);
AnnotatedVolume read_annotated_volume(const std::filesystem::path& payload);

// Little-endian packing shared with the checkpoint format.
std::vector<std::uint8_t> pack_float32_le(std::span<const double> values);
std::vector<std::uint8_t> pack_float64_le(std::span<const double> values);
std::vector<double> unpack_float32_le(std::span<const std::uint8_t> bytes);
std::vector<double> unpack_float64_le(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace organseg
