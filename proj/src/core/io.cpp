#include "keybot/core/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "keybot/core/error.hpp"

namespace keybot {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::io_error, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image decode_png(const std::vector<std::uint8_t>& bytes)
{
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (bytes.empty() || !png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        throw Error(Errc::io_error, std::string("malformed PNG: ") + (bytes.empty() ? "empty buffer" : img.message));
    img.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw Error(Errc::io_error, "malformed PNG: " + msg);
    }
    int h = static_cast<int>(img.height), w = static_cast<int>(img.width);
    std::vector<float> pixels(buffer.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) pixels[i] = buffer[i] / 255.0f;
    return Image(h, w, std::move(pixels));
}

Image read_png(const fs::path& path)
{
    Image img = decode_png(read_file(path));
    img.set_source_id(path.stem().string());
    return img;
}

std::vector<std::uint8_t> encode_png(const Image& image)
{
    std::vector<std::uint8_t> gray(image.pixels().size());
    for (std::size_t i = 0; i < gray.size(); ++i)
        gray[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels()[i], 0.0f, 1.0f) * 255.0f));
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, gray.data(), 0, nullptr))
        throw Error(Errc::io_error, std::string("PNG encode failed: ") + img.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, gray.data(), 0, nullptr))
        throw Error(Errc::io_error, std::string("PNG encode failed: ") + img.message);
    out.resize(size);
    return out;
}

void write_png(const fs::path& path, const Image& image)
{
    auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), Errc::io_error, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

nlohmann::json keypoints_to_json(const KeypointSet& kps)
{
    auto arr = nlohmann::json::array();
    for (const auto& p : kps.points) arr.push_back({p.row, p.col});
    return arr;
}

KeypointSet keypoints_from_json(const nlohmann::json& j)
{
    require(j.is_array(), Errc::invalid_argument, "keypoints must be an array of [row, col]");
    KeypointSet kps;
    for (const auto& item : j) {
        require(item.is_array() && item.size() == 2 && item[0].is_number() && item[1].is_number(),
                Errc::invalid_argument, "keypoint entries must be [row, col] numbers");
        Point p{item[0].get<double>(), item[1].get<double>()};
        require(is_finite(p), Errc::invalid_argument, "keypoint coordinates must be finite");
        kps.points.push_back(p);
    }
    return kps;
}

nlohmann::json to_json(const Annotation& a)
{
    return {{"source_id", a.source_id},
            {"width", a.width},
            {"height", a.height},
            {"keypoints", keypoints_to_json(a.keypoints)},
            {"topology", a.topology}};
}

Annotation annotation_from_json(const nlohmann::json& j)
{
    require(j.is_object(), Errc::invalid_argument, "annotation must be a JSON object");
    for (const char* key : {"source_id", "width", "height", "keypoints", "topology"})
        require(j.contains(key), Errc::invalid_argument, std::string("annotation missing '") + key + "'");
    Annotation a;
    a.source_id = j.at("source_id").get<std::string>();
    a.width = j.at("width").get<int>();
    a.height = j.at("height").get<int>();
    a.keypoints = keypoints_from_json(j.at("keypoints"));
    a.topology = j.at("topology").get<std::string>();
    require(a.width >= 1 && a.height >= 1, Errc::invalid_argument, "annotation dimensions must be positive");
    return a;
}

nlohmann::json read_json(const fs::path& path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), Errc::io_error, "cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::invalid_argument, path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), Errc::io_error, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace keybot
