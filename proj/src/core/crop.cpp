#include "keybot/core/crop.hpp"

#include <algorithm>
#include <limits>

#include "keybot/core/error.hpp"

namespace keybot {

namespace {

struct Interval {
    double lo;
    double hi;
};

Interval expand(Interval iv, double margin_ratio, double limit_hi)
{
    double extent = iv.hi - iv.lo;
    iv.lo -= extent * margin_ratio;
    iv.hi += extent * margin_ratio;
    if (iv.hi - iv.lo < kMinCropExtent) {
        double mid = 0.5 * (iv.lo + iv.hi);
        iv = {mid - 0.5 * kMinCropExtent, mid + 0.5 * kMinCropExtent};
    }
    Interval clipped{std::max(iv.lo, 0.0), std::min(iv.hi, limit_hi)};
    if (clipped.hi - clipped.lo >= kMinCropExtent) return clipped;
    return iv;
}

}  // namespace

CropResult crop_around(const Image& image, const KeypointSet& kps, std::span<const int> indices,
                       int output_height, int output_width, double margin_ratio)
{
    require(!indices.empty(), Errc::invalid_argument, "crop needs at least one keypoint");
    require(output_height >= 2 && output_width >= 2, Errc::invalid_argument, "crop output must be at least 2x2");
    require(margin_ratio >= 0.0, Errc::invalid_argument, "margin ratio must be non-negative");
    Interval rows{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
    Interval cols = rows;
    for (int i : indices) {
        require(i >= 0 && i < static_cast<int>(kps.size()), Errc::out_of_range, "crop index out of range");
        const Point& p = kps[i];
        require(is_finite(p), Errc::invalid_argument, "cannot crop around a non-finite keypoint");
        rows = {std::min(rows.lo, p.row), std::max(rows.hi, p.row)};
        cols = {std::min(cols.lo, p.col), std::max(cols.hi, p.col)};
    }
    rows = expand(rows, margin_ratio, image.height() - 1.0);
    cols = expand(cols, margin_ratio, image.width() - 1.0);

    CropResult out;
    out.transform = {rows.lo, cols.lo, (output_height - 1) / (rows.hi - rows.lo),
                     (output_width - 1) / (cols.hi - cols.lo)};
    out.image = Image(output_height, output_width, 0.0f, image.source_id());
    for (int r = 0; r < output_height; ++r)
        for (int c = 0; c < output_width; ++c) {
            Point src = out.transform.inverse({static_cast<double>(r), static_cast<double>(c)});
            out.image.at(r, c) = image.sample(src.row, src.col);
        }
    for (int i : indices) out.keypoints.points.push_back(out.transform.forward(kps[i]));
    return out;
}

}  // namespace keybot
