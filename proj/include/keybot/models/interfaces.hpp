#pragma once

#include <memory>
#include <span>
#include <vector>

#include "keybot/core/heatmap.hpp"
#include "keybot/core/image.hpp"
#include "keybot/core/topology.hpp"

namespace keybot::models {

/// Backbone keypoint estimator: re-predicts all K keypoints from the image,
/// the correction stack and the false-prediction stack.
class InteractionModel {
public:
    virtual ~InteractionModel() = default;
    virtual int num_keypoints() const = 0;
    /// Grid (and image size) the correction and false-prediction stacks must use.
    virtual GridSpec input_grid() const = 0;
    virtual HeatmapStack forward(const Image& image, const HeatmapStack& corrections,
                                 const HeatmapStack& false_predictions) const = 0;
};

/// Per-keypoint anomaly probabilities over one window of k keypoints.
class DetectorModel {
public:
    virtual ~DetectorModel() = default;
    virtual int window_size() const = 0;
    virtual std::vector<double> forward(const Image& image, const KeypointSet& keypoints,
                                        std::span<const int> window) const = 0;
};

/// Reconstructs plausible K-channel heatmaps from the image and (possibly
/// erroneous) keypoints.
class CorrectorModel {
public:
    virtual ~CorrectorModel() = default;
    virtual int num_keypoints() const = 0;
    virtual HeatmapStack forward(const Image& image, const KeypointSet& keypoints) const = 0;
};

struct ModelSet {
    std::shared_ptr<const InteractionModel> interaction;
    std::shared_ptr<const DetectorModel> detector;
    std::shared_ptr<const CorrectorModel> corrector;
};

/// Checks the window against the topology's detectable indices and k.
void validate_window(const SpineTopology& topology, int window_size, std::span<const int> window);

}  // namespace keybot::models
