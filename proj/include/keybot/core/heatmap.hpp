#pragma once

#include <span>
#include <vector>

#include "keybot/core/geometry.hpp"

namespace keybot {

/// Heatmap grid and its mapping onto image pixels. Cell centers are aligned
/// with pixel centers: image = (cell + 0.5) * scale - 0.5 per axis.
struct GridSpec {
    int height = 0;
    int width = 0;
    int image_height = 0;
    int image_width = 0;

    static GridSpec same_as_image(int height, int width) { return {height, width, height, width}; }

    double row_scale() const { return static_cast<double>(image_height) / height; }
    double col_scale() const { return static_cast<double>(image_width) / width; }

    Point to_image(double cell_row, double cell_col) const
    {
        return {(cell_row + 0.5) * row_scale() - 0.5, (cell_col + 0.5) * col_scale() - 0.5};
    }
    Point to_grid(const Point& p) const
    {
        return {(p.row + 0.5) / row_scale() - 0.5, (p.col + 0.5) / col_scale() - 0.5};
    }
    std::size_t cells() const { return static_cast<std::size_t>(height) * width; }
    bool valid() const { return height > 0 && width > 0 && image_height > 0 && image_width > 0; }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// K channels of H' x W' values in [0, 1], channel-major.
class HeatmapStack {
public:
    HeatmapStack() = default;
    HeatmapStack(int channels, GridSpec grid);

    int channels() const { return channels_; }
    const GridSpec& grid() const { return grid_; }

    std::span<float> channel(int k);
    std::span<const float> channel(int k) const;
    float at(int k, int r, int c) const { return data_[index(k, r, c)]; }
    float& at(int k, int r, int c) { return data_[index(k, r, c)]; }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    bool all_zero() const;

    friend bool operator==(const HeatmapStack&, const HeatmapStack&) = default;

private:
    std::size_t index(int k, int r, int c) const
    {
        return (static_cast<std::size_t>(k) * grid_.height + r) * grid_.width + c;
    }

    int channels_ = 0;
    GridSpec grid_;
    std::vector<float> data_;
};

/// Adds (by pointwise max) an isotropic Gaussian of std `sigma_cells` centered
/// at the image-space point into one channel. Truncated at 4 sigma.
void splat_gaussian(HeatmapStack& stack, int channel, const Point& image_point, double sigma_cells);

/// One Gaussian per active index, peak 1 at the mapped keypoint; inactive
/// channels stay zero. Throws on non-finite coordinates of active keypoints.
HeatmapStack render_heatmaps(const KeypointSet& kps, const GridSpec& grid, double sigma_cells,
                             std::span<const int> active_indices);

/// Convenience overload rendering every keypoint.
HeatmapStack render_heatmaps(const KeypointSet& kps, const GridSpec& grid, double sigma_cells);

struct DecodeResult {
    KeypointSet keypoints;
    /// True where the channel was all zero and the grid origin was returned.
    std::vector<bool> low_confidence;
};

/// Per-channel argmax mapped to image coordinates; ties go to the lowest row,
/// then the lowest column.
DecodeResult decode_heatmaps(const HeatmapStack& stack);

/// Bilinear resampling of every channel onto another grid over the same image.
HeatmapStack resample(const HeatmapStack& stack, const GridSpec& target);

constexpr double kDefaultSigmaCells = 2.0;

}  // namespace keybot
