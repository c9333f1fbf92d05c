#pragma once

#include <span>

#include "keybot/core/geometry.hpp"
#include "keybot/core/image.hpp"

namespace keybot {

/// Axis-aligned affine map from source image coordinates into crop
/// coordinates: crop = (source - origin) * scale, per axis.
struct CropTransform {
    double origin_row = 0.0;
    double origin_col = 0.0;
    double row_scale = 1.0;
    double col_scale = 1.0;

    Point forward(const Point& p) const
    {
        return {(p.row - origin_row) * row_scale, (p.col - origin_col) * col_scale};
    }
    Point inverse(const Point& p) const
    {
        return {p.row / row_scale + origin_row, p.col / col_scale + origin_col};
    }
};

struct CropResult {
    Image image;
    /// The selected keypoints in crop coordinates, in the order of `indices`.
    KeypointSet keypoints;
    CropTransform transform;
};

constexpr double kMinCropExtent = 16.0;
constexpr double kDefaultCropMargin = 0.25;

/// Crops the bounding box of the selected keypoints, grown by `margin_ratio`
/// of its extent on each side, to an output_height x output_width image. Box
/// corners land on the corner pixel centers of the crop. Extents below 16
/// source pixels are widened symmetrically; the box is clipped to the image
/// unless clipping would leave less than that minimum.
CropResult crop_around(const Image& image, const KeypointSet& kps, std::span<const int> indices,
                       int output_height, int output_width, double margin_ratio = kDefaultCropMargin);

}  // namespace keybot
