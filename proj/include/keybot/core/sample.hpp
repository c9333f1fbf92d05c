#pragma once

#include <string>

#include "keybot/core/geometry.hpp"
#include "keybot/core/image.hpp"

namespace keybot {

/// An image paired with its groundtruth keypoints.
struct LabeledImage {
    std::string id;
    Image image;
    KeypointSet keypoints;
};

}  // namespace keybot
