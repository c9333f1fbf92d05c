#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "keybot/core/geometry.hpp"
#include "keybot/core/image.hpp"

namespace keybot {

Image read_png(const std::filesystem::path& path);
/// Decodes an in-memory PNG (any color type) to grayscale. Throws Error(io_error).
Image decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

/// Canonical annotation record as stored in annotations/<id>.json.
struct Annotation {
    std::string source_id;
    int width = 0;
    int height = 0;
    KeypointSet keypoints;
    std::string topology;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

nlohmann::json keypoints_to_json(const KeypointSet& kps);
KeypointSet keypoints_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Annotation& a);
Annotation annotation_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace keybot
