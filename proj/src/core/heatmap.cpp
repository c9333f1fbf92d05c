#include "keybot/core/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "keybot/core/error.hpp"

namespace keybot {

HeatmapStack::HeatmapStack(int channels, GridSpec grid) : channels_(channels), grid_(grid)
{
    require(channels >= 0 && grid.valid(), Errc::invalid_argument, "invalid heatmap stack shape");
    data_.assign(static_cast<std::size_t>(channels) * grid.cells(), 0.0f);
}

std::span<float> HeatmapStack::channel(int k)
{
    return {data_.data() + static_cast<std::size_t>(k) * grid_.cells(), grid_.cells()};
}

std::span<const float> HeatmapStack::channel(int k) const
{
    return {data_.data() + static_cast<std::size_t>(k) * grid_.cells(), grid_.cells()};
}

bool HeatmapStack::all_zero() const
{
    return std::all_of(data_.begin(), data_.end(), [](float v) { return v == 0.0f; });
}

void splat_gaussian(HeatmapStack& stack, int channel, const Point& image_point, double sigma_cells)
{
    require(sigma_cells > 0.0, Errc::invalid_argument, "sigma must be positive");
    require(is_finite(image_point), Errc::invalid_argument, "cannot render a non-finite keypoint");
    require(channel >= 0 && channel < stack.channels(), Errc::out_of_range, "channel out of range");
    const GridSpec& g = stack.grid();
    Point center = g.to_grid(image_point);
    double radius = 4.0 * sigma_cells;
    int r_lo = std::max(0, static_cast<int>(std::ceil(center.row - radius)));
    int r_hi = std::min(g.height - 1, static_cast<int>(std::floor(center.row + radius)));
    int c_lo = std::max(0, static_cast<int>(std::ceil(center.col - radius)));
    int c_hi = std::min(g.width - 1, static_cast<int>(std::floor(center.col + radius)));
    double inv = 1.0 / (2.0 * sigma_cells * sigma_cells);
    for (int r = r_lo; r <= r_hi; ++r) {
        double dr = r - center.row;
        for (int c = c_lo; c <= c_hi; ++c) {
            double dc = c - center.col;
            float v = static_cast<float>(std::exp(-(dr * dr + dc * dc) * inv));
            float& cell = stack.at(channel, r, c);
            cell = std::max(cell, v);
        }
    }
}

HeatmapStack render_heatmaps(const KeypointSet& kps, const GridSpec& grid, double sigma_cells,
                             std::span<const int> active_indices)
{
    require(sigma_cells > 0.0, Errc::invalid_argument, "sigma must be positive");
    HeatmapStack stack(static_cast<int>(kps.size()), grid);
    for (int i : active_indices) {
        require(i >= 0 && i < static_cast<int>(kps.size()), Errc::out_of_range, "active index out of range");
        splat_gaussian(stack, i, kps[i], sigma_cells);
    }
    return stack;
}

HeatmapStack render_heatmaps(const KeypointSet& kps, const GridSpec& grid, double sigma_cells)
{
    std::vector<int> all(kps.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return render_heatmaps(kps, grid, sigma_cells, all);
}

DecodeResult decode_heatmaps(const HeatmapStack& stack)
{
    const GridSpec& g = stack.grid();
    DecodeResult out;
    out.keypoints.points.resize(stack.channels());
    out.low_confidence.assign(stack.channels(), false);
    for (int k = 0; k < stack.channels(); ++k) {
        auto ch = stack.channel(k);
        // max_element returns the first maximum in row-major order.
        auto it = std::max_element(ch.begin(), ch.end());
        std::size_t flat = static_cast<std::size_t>(it - ch.begin());
        if (*it <= 0.0f) {
            flat = 0;
            out.low_confidence[k] = true;
        }
        int r = static_cast<int>(flat / g.width), c = static_cast<int>(flat % g.width);
        out.keypoints[k] = g.to_image(r, c);
    }
    return out;
}

HeatmapStack resample(const HeatmapStack& stack, const GridSpec& target)
{
    const GridSpec& src = stack.grid();
    require(src.image_height == target.image_height && src.image_width == target.image_width,
            Errc::resolution_mismatch, "resample target must cover the same image");
    HeatmapStack out(stack.channels(), target);
    std::vector<int> r0(target.height), c0(target.width);
    std::vector<float> fr(target.height), fc(target.width);
    for (int r = 0; r < target.height; ++r) {
        Point p = target.to_image(r, 0);
        double gr = std::clamp(src.to_grid(p).row, 0.0, src.height - 1.0);
        r0[r] = std::min(static_cast<int>(gr), src.height - 1);
        fr[r] = static_cast<float>(gr - r0[r]);
    }
    for (int c = 0; c < target.width; ++c) {
        Point p = target.to_image(0, c);
        double gc = std::clamp(src.to_grid(p).col, 0.0, src.width - 1.0);
        c0[c] = std::min(static_cast<int>(gc), src.width - 1);
        fc[c] = static_cast<float>(gc - c0[c]);
    }
    for (int k = 0; k < stack.channels(); ++k) {
        for (int r = 0; r < target.height; ++r) {
            int ra = r0[r], rb = std::min(ra + 1, src.height - 1);
            for (int c = 0; c < target.width; ++c) {
                int ca = c0[c], cb = std::min(ca + 1, src.width - 1);
                float top = stack.at(k, ra, ca) * (1 - fc[c]) + stack.at(k, ra, cb) * fc[c];
                float bot = stack.at(k, rb, ca) * (1 - fc[c]) + stack.at(k, rb, cb) * fc[c];
                out.at(k, r, c) = top * (1 - fr[r]) + bot * fr[r];
            }
        }
    }
    return out;
}

}  // namespace keybot
