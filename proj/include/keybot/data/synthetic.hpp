#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "keybot/core/sample.hpp"
#include "keybot/core/topology.hpp"

namespace keybot::data {

/// Knobs of the synthetic radiograph renderer. Lengths are in pixels; the
/// vertebra size and gap ranges are for the top of the column and grow by
/// `growth` (relative) towards the bottom.
struct SyntheticSpineParams {
    std::string topology = "aasce";
    int image_height = 512;
    int image_width = 256;
    double vertebra_height_min = 12.0;
    double vertebra_height_max = 15.0;
    double vertebra_width_min = 34.0;
    double vertebra_width_max = 44.0;
    double gap_min = 9.0;
    double gap_max = 10.0;
    double growth = 0.08;
    double start_row = 32.0;
    double start_row_jitter = 6.0;
    double curvature_amplitude = 16.0;
    double curvature_frequency_min = 0.3;
    double curvature_frequency_max = 0.9;
    double tilt_max = 0.04;
    double background = 0.18;
    double contrast = 0.5;
    double noise = 0.04;
    /// Minimum distance between any two generated keypoints.
    double min_separation = 9.0;
    std::uint64_t seed = 7;

    /// Defaults sized so the preset's column fills the default image.
    static SyntheticSpineParams for_topology(const std::string& topology);

    void validate() const;
};

nlohmann::json to_json(const SyntheticSpineParams& p);
/// Missing keys keep their defaults; unknown keys are rejected.
SyntheticSpineParams synthetic_params_from_json(const nlohmann::json& j, SyntheticSpineParams base);

/// One deterministic sample; the same (params, index) always yields the same
/// image bytes and keypoints. Pixels are quantized to 8 bits so a PNG round
/// trip is lossless.
LabeledImage generate_synthetic_sample(const SyntheticSpineParams& params, int index);

std::vector<LabeledImage> generate_synthetic(const SyntheticSpineParams& params, int count);

}  // namespace keybot::data
