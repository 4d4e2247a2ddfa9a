#include "organseg/dataset.hpp"

#include "json_util.hpp"

namespace organseg {

using detail::json;

const OrganInfo* find_organ(const OrganCatalog& catalog, int id) noexcept {
    for (const auto& organ : catalog) {
        if (organ.id == id) return &organ;
    }
    return nullptr;
}

void write_centroids(const std::filesystem::path& path, const CentroidSet& centroids) {
    json organs = json::array();
    for (const auto& c : centroids) {
        json entry;
        entry["id"] = c.id;
        entry["present"] = c.centroid_mm.has_value();
        if (c.centroid_mm) entry["centroid_mm"] = detail::to_json(*c.centroid_mm);
        organs.push_back(entry);
    }
    detail::write_json_file(path, json{{"organs", organs}});
}

CentroidSet read_centroids(const std::filesystem::path& path) {
    const json doc = detail::read_json_file(path);
    CentroidSet out;
    try {
        for (const auto& entry : doc.at("organs")) {
            OrganCentroid c;
            c.id = entry.at("id").get<int>();
            if (entry.value("present", false)) {
                c.centroid_mm = detail::vec3_from_json(entry.at("centroid_mm"), "centroid_mm");
            }
            out.push_back(c);
        }
    } catch (const json::exception& e) {
        throw InvalidArgument("bad centroid file " + path.string() + ": " + e.what());
    }
    return out;
}

std::vector<ManifestMember> Manifest::split(std::string_view which) const {
    std::vector<ManifestMember> out;
    for (const auto& m : members) {
        if (m.split == which) out.push_back(m);
    }
    return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
    const auto file = std::filesystem::is_directory(path) ? path / "manifest.json" : path;
    const json doc = detail::read_json_file(file);
    Manifest manifest;
    manifest.root = file.parent_path();
    try {
        manifest.seed = doc.value("seed", std::uint64_t{0});
        for (const auto& o : doc.at("organs")) {
            manifest.organs.push_back(
                {o.at("id").get<int>(), o.value("name", std::string{}), o.value("intensity", 0.0)});
        }
        for (const auto& m : doc.at("members")) {
            manifest.members.push_back({m.at("name").get<std::string>(), m.at("split").get<std::string>(),
                                        m.at("image").get<std::string>(), m.at("labels").get<std::string>(),
                                        m.at("centroids").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw InvalidArgument("bad manifest " + file.string() + ": " + e.what());
    }
    for (std::size_t n = 0; n < manifest.organs.size(); ++n) {
        if (manifest.organs[n].id != static_cast<int>(n + 1)) {
            throw InvalidArgument("manifest organ ids must be contiguous from 1: " + file.string());
        }
    }
    return manifest;
}

void write_manifest(const Manifest& manifest) {
    json organs = json::array();
    for (const auto& o : manifest.organs) {
        organs.push_back({{"id", o.id}, {"name", o.name}, {"intensity", o.intensity}});
    }
    json members = json::array();
    for (const auto& m : manifest.members) {
        members.push_back({{"name", m.name},
                           {"split", m.split},
                           {"image", m.image},
                           {"labels", m.labels},
                           {"centroids", m.centroids}});
    }
    json doc{{"format", "organseg-corpus/1"}, {"seed", manifest.seed}, {"organs", organs}, {"members", members}};
    detail::write_json_file(manifest.root / "manifest.json", doc);
}

}  // namespace organseg
