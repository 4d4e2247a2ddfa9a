#include "organseg/volume_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json_util.hpp"
#include "organseg/errors.hpp"

namespace organseg {

using detail::json;

namespace {

template <typename U>
void store_le(U value, std::uint8_t* out) {
    for (std::size_t b = 0; b < sizeof(U); ++b) {
        out[b] = static_cast<std::uint8_t>((value >> (8 * b)) & 0xFFu);
    }
}

template <typename U>
U load_le(const std::uint8_t* in) {
    U value = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) {
        value |= static_cast<U>(in[b]) << (8 * b);
    }
    return value;
}

}  // namespace

std::vector<std::uint8_t> pack_float32_le(std::span<const double> values) {
    std::vector<std::uint8_t> out(values.size() * 4);
    for (std::size_t n = 0; n < values.size(); ++n) {
        store_le(std::bit_cast<std::uint32_t>(static_cast<float>(values[n])), out.data() + 4 * n);
    }
    return out;
}

std::vector<std::uint8_t> pack_float64_le(std::span<const double> values) {
    std::vector<std::uint8_t> out(values.size() * 8);
    for (std::size_t n = 0; n < values.size(); ++n) {
        store_le(std::bit_cast<std::uint64_t>(values[n]), out.data() + 8 * n);
    }
    return out;
}

std::vector<double> unpack_float32_le(std::span<const std::uint8_t> bytes) {
    std::vector<double> out(bytes.size() / 4);
    for (std::size_t n = 0; n < out.size(); ++n) {
        out[n] = static_cast<double>(std::bit_cast<float>(load_le<std::uint32_t>(bytes.data() + 4 * n)));
    }
    return out;
}

std::vector<double> unpack_float64_le(std::span<const std::uint8_t> bytes) {
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t n = 0; n < out.size(); ++n) {
        out[n] = std::bit_cast<double>(load_le<std::uint64_t>(bytes.data() + 8 * n));
    }
    return out;
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError(path.parent_path().string(), "cannot create directory");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string(), "write failed");
}

std::filesystem::path sidecar_path(const std::filesystem::path& payload) {
    return std::filesystem::path(payload.string() + ".json");
}

void write_volume(const std::filesystem::path& payload, const Volume3D& vol,
                  const std::optional<CropAnnotation>& crop) {
    const bool is_label = vol.kind() == VolumeKind::label;
    json header;
    header["dims"] = detail::to_json(vol.dims());
    header["spacing"] = detail::to_json(vol.spacing());
    header["origin"] = detail::to_json(vol.origin());
    header["kind"] = std::string(to_string(vol.kind()));
    header["dtype"] = is_label ? "uint16" : "float32";
    header["order"] = "x-fastest";
    header["endian"] = "little";
    if (crop) {
        header["organ_id"] = crop->organ_id;
        header["box_min"] = detail::to_json(crop->box.min_corner);
        header["box_max"] = detail::to_json(crop->box.max_corner);
    }

    std::vector<std::uint8_t> bytes;
    if (is_label) {
        bytes.resize(static_cast<std::size_t>(vol.size()) * 2);
        std::size_t n = 0;
        for (double v : vol.data()) {
            if (!(v >= 0.0 && v <= 65535.0) || v != std::floor(v)) {
                throw InvalidArgument("label value " + std::to_string(v) + " cannot be stored as uint16");
            }
            store_le(static_cast<std::uint16_t>(v), bytes.data() + 2 * n++);
        }
    } else {
        bytes = pack_float32_le(vol.data());
    }
    write_binary_file(payload, bytes);
    detail::write_json_file(sidecar_path(payload), header);
}

AnnotatedVolume read_annotated_volume(const std::filesystem::path& payload) {
    const json header = detail::read_json_file(sidecar_path(payload));
    GridSpec grid;
    VolumeKind kind{};
    std::string dtype;
    try {
        grid.dims = detail::index3_from_json(header.at("dims"), "dims");
        grid.spacing = detail::vec3_from_json(header.at("spacing"), "spacing");
        grid.origin = detail::vec3_from_json(header.at("origin"), "origin");
        kind = parse_volume_kind(header.at("kind").get<std::string>());
        dtype = header.at("dtype").get<std::string>();
        if (header.value("order", std::string("x-fastest")) != "x-fastest") {
            throw InvalidArgument("unsupported sample order in " + sidecar_path(payload).string());
        }
    } catch (const json::exception& e) {
        throw InvalidArgument("bad volume header " + sidecar_path(payload).string() + ": " + e.what());
    }
    grid.validate();

    const auto bytes = read_binary_file(payload);
    const auto count = static_cast<std::size_t>(grid.voxel_count());
    std::vector<double> data;
    if (dtype == "uint16") {
        if (bytes.size() != count * 2) throw IoError(payload.string(), "payload size does not match header");
        data.resize(count);
        for (std::size_t n = 0; n < count; ++n) data[n] = load_le<std::uint16_t>(bytes.data() + 2 * n);
    } else if (dtype == "float32") {
        if (bytes.size() != count * 4) throw IoError(payload.string(), "payload size does not match header");
        data = unpack_float32_le(bytes);
    } else {
        throw InvalidArgument("unsupported dtype '" + dtype + "' in " + sidecar_path(payload).string());
    }

    AnnotatedVolume out{Volume3D(grid, kind, std::move(data)), std::nullopt};
    if (header.contains("box_min")) {
        CropAnnotation crop;
        crop.organ_id = header.value("organ_id", 0);
        crop.box.min_corner = detail::index3_from_json(header.at("box_min"), "box_min");
        crop.box.max_corner = detail::index3_from_json(header.at("box_max"), "box_max");
        crop.box.spacing = grid.spacing;
        out.crop = crop;
    }
    return out;
}

Volume3D read_volume(const std::filesystem::path& payload) {
    return read_annotated_volume(payload).volume;
}

}  // namespace organseg
