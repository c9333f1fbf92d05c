#include "keybot/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "keybot/core/error.hpp"
#include "keybot/core/io.hpp"
#include "keybot/core/random.hpp"

namespace fs = std::filesystem;

namespace keybot::data {

std::vector<std::string> DatasetManifest::ids() const
{
    std::vector<std::string> out = train;
    out.insert(out.end(), val.begin(), val.end());
    out.insert(out.end(), test.begin(), test.end());
    return out;
}

const std::vector<std::string>& DatasetManifest::split(const std::string& which) const
{
    if (which == "train") return train;
    if (which == "val") return val;
    if (which == "test") return test;
    throw Error(Errc::invalid_argument, "unknown split '" + which + "'");
}

void DatasetManifest::validate() const
{
    std::set<std::string> seen;
    for (const auto& id : ids()) {
        require(!id.empty(), Errc::invalid_argument, "empty sample id in manifest");
        require(seen.insert(id).second, Errc::invalid_argument, "sample id '" + id + "' appears twice in the manifest");
    }
    SpineTopology::preset(topology);
}

nlohmann::json to_json(const DatasetManifest& m)
{
    return {{"name", m.name},
            {"topology", m.topology},
            {"splits", {{"train", m.train}, {"val", m.val}, {"test", m.test}}},
            {"provenance", m.provenance}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j)
{
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.topology = j.at("topology").get<std::string>();
        const auto& s = j.at("splits");
        m.train = s.value("train", std::vector<std::string>{});
        m.val = s.value("val", std::vector<std::string>{});
        m.test = s.value("test", std::vector<std::string>{});
        m.provenance = j.value("provenance", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::invalid_argument, std::string("malformed manifest: ") + e.what());
    }
    m.validate();
    return m;
}

DatasetManifest split_dataset(const DatasetManifest& manifest, std::array<double, 3> ratios, std::uint64_t seed)
{
    std::vector<std::string> ids = manifest.ids();
    require(!ids.empty(), Errc::invalid_argument, "cannot split an empty manifest");
    for (double r : ratios) require(r >= 0.0, Errc::invalid_argument, "split ratios must be non-negative");
    require(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) < 1e-9, Errc::invalid_argument,
            "split ratios must sum to 1");
    // Canonical order first so the result does not depend on the input split.
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_int(rng, 0, static_cast<int>(i) - 1)]);

    const auto n = static_cast<double>(ids.size());
    auto cut = [&](double r) { return static_cast<std::size_t>(std::max(0.0, std::ceil(r * n - 1e-9))); };
    const std::size_t n_train = std::min(cut(ratios[0]), ids.size());
    const std::size_t n_val = std::min(cut(ratios[1]), ids.size() - n_train);

    DatasetManifest out = manifest;
    out.train.assign(ids.begin(), ids.begin() + n_train);
    out.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    out.test.assign(ids.begin() + n_train + n_val, ids.end());
    return out;
}

void write_dataset(const fs::path& root, const DatasetManifest& manifest, const std::vector<LabeledImage>& samples)
{
    manifest.validate();
    fs::create_directories(root / "images");
    fs::create_directories(root / "annotations");
    for (const auto& s : samples) {
        write_png(root / "images" / (s.id + ".png"), s.image);
        Annotation a{s.id, s.image.width(), s.image.height(), s.keypoints, manifest.topology};
        write_json(root / "annotations" / (s.id + ".json"), to_json(a));
    }
    write_json(root / "manifest.json", to_json(manifest));
}

DatasetManifest load_manifest(const fs::path& root)
{
    require(fs::exists(root / "manifest.json"), Errc::not_found, "no manifest.json under " + root.string());
    return manifest_from_json(read_json(root / "manifest.json"));
}

LabeledImage load_sample(const fs::path& root, const std::string& id, const SpineTopology& topology)
{
    const Annotation a = annotation_from_json(read_json(root / "annotations" / (id + ".json")));
    require(static_cast<int>(a.keypoints.size()) == topology.num_keypoints(), Errc::invalid_argument,
            "sample '" + id + "' has " + std::to_string(a.keypoints.size()) + " keypoints, topology expects " +
                std::to_string(topology.num_keypoints()));
    Image img = read_png(root / "images" / (id + ".png"));
    require(img.height() == a.height && img.width() == a.width, Errc::invalid_argument,
            "sample '" + id + "' image size differs from its annotation");
    img.set_source_id(id);
    return LabeledImage{id, std::move(img), a.keypoints};
}

std::vector<LabeledImage> load_split(const fs::path& root, const DatasetManifest& manifest, const std::string& which)
{
    const SpineTopology topo = SpineTopology::preset(manifest.topology);
    std::vector<LabeledImage> out;
    for (const auto& id : manifest.split(which)) out.push_back(load_sample(root, id, topo));
    return out;
}

LabeledImage to_working_frame(const LabeledImage& sample, int height, int width)
{
    if (sample.image.height() == height && sample.image.width() == width) return sample;
    const double sr = static_cast<double>(height) / sample.image.height();
    const double sc = static_cast<double>(width) / sample.image.width();
    LabeledImage out{sample.id, resize(sample.image, height, width), sample.keypoints};
    // Pixel-center aligned scaling, matching resize().
    for (auto& p : out.keypoints.points) p = {(p.row + 0.5) * sr - 0.5, (p.col + 0.5) * sc - 0.5};
    return out;
}

ImportFormat import_format_from_string(const std::string& s)
{
    if (s == "canonical_json") return ImportFormat::canonical_json;
    if (s == "aasce_landmarks") return ImportFormat::aasce_landmarks;
    if (s == "buu_landmarks") return ImportFormat::buu_landmarks;
    throw Error(Errc::invalid_argument, "unknown import format '" + s + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t\r"));
        cell.erase(cell.find_last_not_of(" \t\r") + 1);
        out.push_back(cell);
    }
    return out;
}

std::vector<std::string> read_lines(const fs::path& p)
{
    std::ifstream in(p);
    require(in.good(), Errc::io_error, "cannot open " + p.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::string stem_id(const std::string& name)
{
    return fs::path(name).stem().string();
}

void import_canonical(const fs::path& src, const SpineTopology& topo, ImportResult& res)
{
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(src / "annotations"))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const std::string id = f.stem().string();
        try {
            const Annotation a = annotation_from_json(read_json(f));
            require(static_cast<int>(a.keypoints.size()) == topo.num_keypoints(), Errc::invalid_argument,
                    "keypoint count " + std::to_string(a.keypoints.size()) + " != K");
            Image img = read_png(src / "images" / (id + ".png"));
            img.set_source_id(id);
            res.samples.push_back({id, std::move(img), a.keypoints});
        } catch (const std::exception& e) {
            res.skipped.push_back({id, e.what()});
        }
    }
}

void import_aasce(const fs::path& src, const SpineTopology& topo, ImportResult& res)
{
    const auto names = read_lines(src / "filenames.csv");
    const auto rows = read_lines(src / "landmarks.csv");
    const int K = topo.num_keypoints();
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::string file = split_csv_line(names[i]).at(0);
        const std::string id = stem_id(file);
        try {
            require(i < rows.size(), Errc::invalid_argument, "no landmark row");
            const auto cells = split_csv_line(rows[i]);
            require(static_cast<int>(cells.size()) == 2 * K, Errc::invalid_argument,
                    "expected " + std::to_string(2 * K) + " landmark values, got " + std::to_string(cells.size()));
            fs::path img_path = src / "images" / file;
            if (img_path.extension() != ".png") img_path.replace_extension(".png");
            Image img = read_png(img_path);
            img.set_source_id(id);
            std::vector<Point> pts(K);
            for (int k = 0; k < K; ++k) {
                const double x = std::stod(cells[k]), y = std::stod(cells[K + k]);
                pts[k] = {y * img.height(), x * img.width()};
            }
            res.samples.push_back({id, std::move(img), KeypointSet(std::move(pts))});
        } catch (const std::exception& e) {
            res.skipped.push_back({id, e.what()});
        }
    }
}

void import_buu(const fs::path& src, const SpineTopology& topo, ImportResult& res)
{
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(src))
        if (e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const std::string id = f.stem().string();
        try {
            std::vector<Point> pts;
            for (const auto& line : read_lines(f)) {
                const auto cells = split_csv_line(line);
                require(cells.size() == 2, Errc::invalid_argument, "expected 'x,y' per line");
                pts.push_back({std::stod(cells[1]), std::stod(cells[0])});
            }
            require(static_cast<int>(pts.size()) == topo.num_keypoints(), Errc::invalid_argument,
                    "keypoint count " + std::to_string(pts.size()) + " != K");
            Image img = read_png(src / (id + ".png"));
            img.set_source_id(id);
            res.samples.push_back({id, std::move(img), KeypointSet(std::move(pts))});
        } catch (const std::exception& e) {
            res.skipped.push_back({id, e.what()});
        }
    }
}

}  // namespace

ImportResult import_annotations(const fs::path& src, ImportFormat format, const std::string& topology)
{
    const SpineTopology topo = SpineTopology::preset(topology);
    require(fs::is_directory(src), Errc::not_found, "import source is not a directory: " + src.string());
    ImportResult res;
    switch (format) {
    case ImportFormat::canonical_json: import_canonical(src, topo, res); break;
    case ImportFormat::aasce_landmarks: import_aasce(src, topo, res); break;
    case ImportFormat::buu_landmarks: import_buu(src, topo, res); break;
    }
    require(!res.samples.empty(), Errc::invalid_argument,
            "no samples imported from " + src.string() + " (" + std::to_string(res.skipped.size()) + " skipped)");
    res.manifest.name = src.filename().string();
    res.manifest.topology = topology;
    res.manifest.provenance = "imported from " + src.string();
    for (const auto& s : res.samples) res.manifest.train.push_back(s.id);
    return res;
}

}  // namespace keybot::data
