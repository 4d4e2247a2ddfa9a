#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "organseg/errors.hpp"
#include "organseg/geometry.hpp"

namespace organseg::detail {

using nlohmann::json;

inline json to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }
inline json to_json(const Index3& v) { return json::array({v[0], v[1], v[2]}); }

inline Vec3 vec3_from_json(const json& j, const char* field) {
    if (!j.is_array() || j.size() != 3) {
        throw InvalidArgument(std::string("field '") + field + "' must be a 3-element array");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Index3 index3_from_json(const json& j, const char* field) {
    if (!j.is_array() || j.size() != 3) {
        throw InvalidArgument(std::string("field '") + field + "' must be a 3-element array");
    }
    return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError(path.parent_path().string(), "cannot create directory");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out << text;
    if (!out) throw IoError(path.string(), "write failed");
}

inline void write_json_file(const std::filesystem::path& path, const json& doc) {
    write_text_file(path, doc.dump(2) + "\n");
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::exception& e) {
        throw InvalidArgument("malformed JSON in " + path.string() + ": " + e.what());
    }
}

}  // namespace organseg::detail
