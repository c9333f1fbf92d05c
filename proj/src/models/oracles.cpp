#include "keybot/models/oracles.hpp"

#include <algorithm>

#include "keybot/core/error.hpp"

namespace keybot::models {

OracleDetector::OracleDetector(KeypointSet groundtruth, int window, double tau)
    : gt_(std::move(groundtruth)), window_(window), tau_(tau)
{
    require(window_ >= 1 && tau_ >= 0.0, Errc::invalid_argument, "oracle detector needs window >= 1, tau >= 0");
}

std::vector<double> OracleDetector::forward(const Image&, const KeypointSet& keypoints,
                                            std::span<const int> window) const
{
    require(static_cast<int>(window.size()) == window_, Errc::invalid_argument, "detector window size mismatch");
    require(keypoints.size() == gt_.size(), Errc::invalid_argument, "oracle detector keypoint count mismatch");
    std::vector<double> out;
    for (int i : window) out.push_back(distance(keypoints.points.at(i), gt_[i]) > tau_ ? 1.0 : 0.0);
    return out;
}

OracleCorrector::OracleCorrector(KeypointSet groundtruth, GridSpec grid, double sigma_cells)
    : gt_(std::move(groundtruth)), grid_(grid), sigma_(sigma_cells)
{
}

HeatmapStack OracleCorrector::forward(const Image&, const KeypointSet& keypoints) const
{
    require(keypoints.size() == gt_.size(), Errc::invalid_argument, "oracle corrector keypoint count mismatch");
    return render_heatmaps(gt_, grid_, sigma_);
}

IdentityHintInteraction::IdentityHintInteraction(KeypointSet base, GridSpec grid, double sigma_cells)
    : base_(std::move(base)), grid_(grid), sigma_(sigma_cells)
{
}

HeatmapStack IdentityHintInteraction::forward(const Image&, const HeatmapStack& corrections,
                                              const HeatmapStack& false_predictions) const
{
    const int K = num_keypoints();
    require(corrections.channels() == K && corrections.grid() == grid_ && false_predictions.channels() == K &&
                false_predictions.grid() == grid_,
            Errc::resolution_mismatch, "hint stacks do not match the stub grid");
    HeatmapStack out = render_heatmaps(base_, grid_, sigma_);
    for (int k = 0; k < K; ++k) {
        auto hint = corrections.channel(k);
        if (std::any_of(hint.begin(), hint.end(), [](float v) { return v != 0.0f; }))
            std::copy(hint.begin(), hint.end(), out.channel(k).begin());
    }
    return out;
}

}  // namespace keybot::models
