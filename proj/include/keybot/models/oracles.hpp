#pragma once

#include "keybot/models/interfaces.hpp"

namespace keybot::models {

/// Flags exactly the keypoints farther than tau pixels from groundtruth.
class OracleDetector final : public DetectorModel {
public:
    OracleDetector(KeypointSet groundtruth, int window, double tau = 8.0);

    int window_size() const override { return window_; }
    std::vector<double> forward(const Image& image, const KeypointSet& keypoints,
                                std::span<const int> window) const override;

private:
    KeypointSet gt_;
    int window_;
    double tau_;
};

/// Returns groundtruth heatmaps on a fixed grid regardless of its input.
class OracleCorrector final : public CorrectorModel {
public:
    OracleCorrector(KeypointSet groundtruth, GridSpec grid, double sigma_cells = kDefaultSigmaCells);

    int num_keypoints() const override { return static_cast<int>(gt_.size()); }
    HeatmapStack forward(const Image& image, const KeypointSet& keypoints) const override;

private:
    KeypointSet gt_;
    GridSpec grid_;
    double sigma_;
};

/// Hint-following stub: every channel with a correction hint is returned as
/// is, every other channel renders the fixed base prediction.
class IdentityHintInteraction final : public InteractionModel {
public:
    IdentityHintInteraction(KeypointSet base, GridSpec grid, double sigma_cells = kDefaultSigmaCells);

    int num_keypoints() const override { return static_cast<int>(base_.size()); }
    GridSpec input_grid() const override { return grid_; }
    HeatmapStack forward(const Image& image, const HeatmapStack& corrections,
                         const HeatmapStack& false_predictions) const override;

private:
    KeypointSet base_;
    GridSpec grid_;
    double sigma_;
};

}  // namespace keybot::models
