#pragma once

#include <cstdint>
#include <vector>

#include "keybot/core/crop.hpp"
#include "keybot/models/encoder_decoder.hpp"
#include "keybot/models/interfaces.hpp"
#include "keybot/nn/layers.hpp"

namespace keybot::models {

/// Working frame shared by the three models: every keypoint set and every
/// input stack is expressed in this image's pixel coordinates.
constexpr int kWorkingHeight = 512;
constexpr int kWorkingWidth = 256;

struct InteractionConfig {
    int num_keypoints = 68;
    int image_height = kWorkingHeight;
    int image_width = kWorkingWidth;
    /// Input average-pooling factor; the network runs at image / pool.
    int pool = 4;
    std::vector<int> widths = {24, 48, 64, 96};
    double target_sigma_cells = kDefaultSigmaCells;
};

/// Encoder-decoder over [image, c, e, coords]. c and e are rendered at the
/// full working resolution and pooled with the image; the output grid is the
/// pooled grid spanning the working frame.
class ToyInteractionModel final : public InteractionModel {
public:
    ToyInteractionModel(InteractionConfig config, std::uint64_t seed);

    int num_keypoints() const override { return cfg_.num_keypoints; }
    GridSpec input_grid() const override { return GridSpec::same_as_image(cfg_.image_height, cfg_.image_width); }
    GridSpec output_grid() const;
    HeatmapStack forward(const Image& image, const HeatmapStack& corrections,
                         const HeatmapStack& false_predictions) const override;

    const InteractionConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }

    // Training hooks.
    nn::Tensor build_input(const Image& image, const HeatmapStack& corrections,
                           const HeatmapStack& false_predictions) const;
    nn::Tensor logits(const nn::Tensor& input, EncoderDecoder::Trace* trace) const { return net_.forward(input, trace); }
    void backward(const nn::Tensor& grad_logits, const EncoderDecoder::Trace& trace) { net_.backward(grad_logits, trace); }
    std::vector<nn::Param*> params() { return net_.params(); }

private:
    InteractionConfig cfg_;
    std::uint64_t seed_;
    EncoderDecoder net_;
};

struct CorrectorConfig {
    int num_keypoints = 68;
    int image_height = kWorkingHeight;
    int image_width = kWorkingWidth;
    /// The image is resized by 1 / input_downscale before entering the model.
    int input_downscale = 2;
    int pool = 2;
    std::vector<int> widths = {24, 48, 64, 96};
    double target_sigma_cells = kDefaultSigmaCells;
    float passthrough_init = 2.0f;
};

/// Encoder-decoder over [image / 2, rendered keypoints, coords].
class ToyCorrector final : public CorrectorModel {
public:
    ToyCorrector(CorrectorConfig config, std::uint64_t seed);

    int num_keypoints() const override { return cfg_.num_keypoints; }
    HeatmapStack forward(const Image& image, const KeypointSet& keypoints) const override;

    /// Grid on which the input keypoints are rendered (the resized image).
    GridSpec input_grid() const;
    GridSpec output_grid() const;
    const CorrectorConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }

    nn::Tensor build_input(const Image& image, const KeypointSet& keypoints) const;
    nn::Tensor logits(const nn::Tensor& input, EncoderDecoder::Trace* trace) const { return net_.forward(input, trace); }
    void backward(const nn::Tensor& grad_logits, const EncoderDecoder::Trace& trace) { net_.backward(grad_logits, trace); }
    std::vector<nn::Param*> params() { return net_.params(); }

private:
    CorrectorConfig cfg_;
    std::uint64_t seed_;
    EncoderDecoder net_;
};

struct DetectorConfig {
    int window = 8;
    int crop_size = 128;
    double crop_margin = kDefaultCropMargin;
    double sigma_cells = kDefaultSigmaCells;
    std::vector<int> widths = {16, 32, 48, 64};
    int hidden = 128;
};

/// Strided convolutional encoder (four stride-2 stages) and a two-layer head
/// with one sigmoid output per window keypoint.
class ToyDetector final : public DetectorModel {
public:
    ToyDetector(DetectorConfig config, std::uint64_t seed);

    int window_size() const override { return cfg_.window; }
    std::vector<double> forward(const Image& image, const KeypointSet& keypoints,
                                std::span<const int> window) const override;

    const DetectorConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }

    nn::Tensor build_input(const Image& image, const KeypointSet& keypoints, std::span<const int> window) const;
    nn::Tensor logits(const nn::Tensor& input, std::vector<nn::Saved>* saved) const { return net_.forward(input, saved); }
    void backward(const nn::Tensor& grad_logits, const std::vector<nn::Saved>& saved) { net_.backward(grad_logits, saved); }
    std::vector<nn::Param*> params();

private:
    DetectorConfig cfg_;
    std::uint64_t seed_;
    nn::Sequential net_;
};

/// Average-pools channels of a heatmap stack into `dst` starting at `offset`.
void pool_into(nn::Tensor& dst, int offset, std::span<const float> plane_data, int channels, int height, int width,
               int factor);

/// Writes normalized row/col coordinate planes in [-1, 1] into channels
/// offset and offset + 1.
void fill_coordinates(nn::Tensor& t, int offset);

HeatmapStack logits_to_heatmaps(const nn::Tensor& logits, const GridSpec& grid);

}  // namespace keybot::models
