#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "keybot/core/sample.hpp"
#include "keybot/core/topology.hpp"

namespace keybot::data {

struct DatasetManifest {
    std::string name;
    std::string topology;
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::string provenance;

    /// All ids, split order (train, val, test).
    std::vector<std::string> ids() const;
    const std::vector<std::string>& split(const std::string& which) const;
    /// Throws unless the splits are pairwise disjoint.
    void validate() const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// Shuffles the ids with the seed and cuts them into train/val/test. Train
/// and val sizes are rounded up, the remainder goes to test (399 ids at
/// 0.6/0.2/0.2 give 240/80/79).
DatasetManifest split_dataset(const DatasetManifest& manifest, std::array<double, 3> ratios, std::uint64_t seed);

/// Writes images/<id>.png, annotations/<id>.json and manifest.json under root.
void write_dataset(const std::filesystem::path& root, const DatasetManifest& manifest,
                   const std::vector<LabeledImage>& samples);

DatasetManifest load_manifest(const std::filesystem::path& root);
/// Reads one sample and checks its keypoint count against the topology.
LabeledImage load_sample(const std::filesystem::path& root, const std::string& id, const SpineTopology& topology);
std::vector<LabeledImage> load_split(const std::filesystem::path& root, const DatasetManifest& manifest,
                                     const std::string& which);

/// Resizes the image to height x width and scales the keypoints along.
LabeledImage to_working_frame(const LabeledImage& sample, int height, int width);

enum class ImportFormat { canonical_json, aasce_landmarks, buu_landmarks };

ImportFormat import_format_from_string(const std::string& s);

struct SkippedSample {
    std::string id;
    std::string reason;
};

struct ImportResult {
    DatasetManifest manifest;
    std::vector<LabeledImage> samples;
    std::vector<SkippedSample> skipped;
};

/// Reads a foreign corpus into canonical samples (all ids land in train;
/// split afterwards). Bad samples are skipped with a reason; throws only when
/// nothing imports.
///
/// canonical_json: <src>/annotations/*.json with images at <src>/images/<id>.png.
/// aasce_landmarks: <src>/filenames.csv, <src>/landmarks.csv (per row K
///   normalized x values then K normalized y values) and <src>/images/.
/// buu_landmarks: <src>/<id>.png with <src>/<id>.txt holding one "x,y" pixel
///   pair per line in topology order.
ImportResult import_annotations(const std::filesystem::path& src, ImportFormat format, const std::string& topology);

}  // namespace keybot::data
