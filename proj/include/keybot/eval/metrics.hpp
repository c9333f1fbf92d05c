#pragma once

#include <span>

#include "keybot/core/geometry.hpp"

namespace keybot::eval {

/// Mean Euclidean distance between paired keypoints, in pixels.
double mre(const KeypointSet& prediction, const KeypointSet& groundtruth);

/// Smallest click count c <= max_clicks with curve[c] <= target; max_clicks
/// when the target is never reached.
double noc(std::span<const double> curve, int max_clicks, double target);

}  // namespace keybot::eval
