#include "keybot/models/toy_models.hpp"

#include <algorithm>
#include <cmath>

#include "keybot/core/crop.hpp"
#include "keybot/core/error.hpp"

namespace keybot::models {

void pool_into(nn::Tensor& dst, int offset, std::span<const float> plane_data, int channels, int height, int width,
               int factor)
{
    require(height == dst.h * factor && width == dst.w * factor, Errc::resolution_mismatch,
            "pooled plane does not match the network grid");
    const float norm = 1.0f / static_cast<float>(factor * factor);
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    for (int k = 0; k < channels; ++k) {
        const float* src = plane_data.data() + k * plane;
        float* out = dst.channel(offset + k);
        // Hint stacks are mostly empty channels.
        if (std::all_of(src, src + plane, [](float v) { return v == 0.0f; })) continue;
        for (int r = 0; r < height; ++r) {
            float* row = out + (r / factor) * dst.w;
            const float* s = src + static_cast<std::size_t>(r) * width;
            for (int c = 0; c < width; ++c) row[c / factor] += s[c];
        }
        for (std::size_t i = 0; i < dst.plane(); ++i) out[i] *= norm;
    }
}

void fill_coordinates(nn::Tensor& t, int offset)
{
    float* rows = t.channel(offset);
    float* cols = t.channel(offset + 1);
    for (int r = 0; r < t.h; ++r)
        for (int c = 0; c < t.w; ++c) {
            rows[r * t.w + c] = t.h > 1 ? 2.0f * r / (t.h - 1) - 1.0f : 0.0f;
            cols[r * t.w + c] = t.w > 1 ? 2.0f * c / (t.w - 1) - 1.0f : 0.0f;
        }
}

HeatmapStack logits_to_heatmaps(const nn::Tensor& logits, const GridSpec& grid)
{
    require(logits.h == grid.height && logits.w == grid.width, Errc::resolution_mismatch,
            "logit grid does not match the output grid");
    HeatmapStack out(logits.c, grid);
    auto& d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = nn::sigmoid(logits.data[i]);
    return out;
}

namespace {

void require_image(const Image& image, int height, int width)
{
    require(image.height() == height && image.width() == width, Errc::resolution_mismatch,
            "image does not match the model's working resolution");
}

void require_stack(const HeatmapStack& stack, int channels, const GridSpec& grid, const char* what)
{
    require(stack.channels() == channels && stack.grid() == grid, Errc::resolution_mismatch,
            std::string(what) + " stack does not match the model input grid");
}

}  // namespace

// ---------------------------------------------------------------------------

ToyInteractionModel::ToyInteractionModel(InteractionConfig config, std::uint64_t seed)
    : cfg_(std::move(config)),
      seed_(seed),
      net_(
          [&] {
              require(cfg_.num_keypoints >= 1, Errc::invalid_argument, "interaction model needs K >= 1");
              require(cfg_.pool >= 1 && cfg_.image_height % (cfg_.pool * 8) == 0 &&
                          cfg_.image_width % (cfg_.pool * 8) == 0,
                      Errc::invalid_argument, "interaction resolution must be divisible by pool * 8");
              EncoderDecoder::Config c;
              c.in_channels = 1 + 2 * cfg_.num_keypoints + 2;
              c.out_channels = cfg_.num_keypoints;
              c.widths = cfg_.widths;
              c.passthrough_offsets = {1, 1 + cfg_.num_keypoints};
              return c;
          }(),
          seed)
{
}

GridSpec ToyInteractionModel::output_grid() const
{
    return {cfg_.image_height / cfg_.pool, cfg_.image_width / cfg_.pool, cfg_.image_height, cfg_.image_width};
}

nn::Tensor ToyInteractionModel::build_input(const Image& image, const HeatmapStack& corrections,
                                            const HeatmapStack& false_predictions) const
{
    require_image(image, cfg_.image_height, cfg_.image_width);
    require_stack(corrections, cfg_.num_keypoints, input_grid(), "correction");
    require_stack(false_predictions, cfg_.num_keypoints, input_grid(), "false-prediction");
    const int K = cfg_.num_keypoints;
    nn::Tensor x(1 + 2 * K + 2, cfg_.image_height / cfg_.pool, cfg_.image_width / cfg_.pool);
    pool_into(x, 0, image.pixels(), 1, image.height(), image.width(), cfg_.pool);
    pool_into(x, 1, corrections.data(), K, cfg_.image_height, cfg_.image_width, cfg_.pool);
    pool_into(x, 1 + K, false_predictions.data(), K, cfg_.image_height, cfg_.image_width, cfg_.pool);
    fill_coordinates(x, 1 + 2 * K);
    return x;
}

HeatmapStack ToyInteractionModel::forward(const Image& image, const HeatmapStack& corrections,
                                          const HeatmapStack& false_predictions) const
{
    return logits_to_heatmaps(net_.forward(build_input(image, corrections, false_predictions), nullptr),
                              output_grid());
}

// ---------------------------------------------------------------------------

ToyCorrector::ToyCorrector(CorrectorConfig config, std::uint64_t seed)
    : cfg_(std::move(config)),
      seed_(seed),
      net_(
          [&] {
              require(cfg_.num_keypoints >= 1, Errc::invalid_argument, "corrector needs K >= 1");
              const int f = cfg_.input_downscale * cfg_.pool * 8;
              require(cfg_.input_downscale >= 1 && cfg_.pool >= 1 && cfg_.image_height % f == 0 &&
                          cfg_.image_width % f == 0,
                      Errc::invalid_argument, "corrector resolution must be divisible by downscale * pool * 8");
              EncoderDecoder::Config c;
              c.in_channels = 1 + cfg_.num_keypoints + 2;
              c.out_channels = cfg_.num_keypoints;
              c.widths = cfg_.widths;
              c.passthrough_offsets = {1};
              c.passthrough_init = cfg_.passthrough_init;
              return c;
          }(),
          seed)
{
}

GridSpec ToyCorrector::input_grid() const
{
    return {cfg_.image_height / cfg_.input_downscale, cfg_.image_width / cfg_.input_downscale, cfg_.image_height,
            cfg_.image_width};
}

GridSpec ToyCorrector::output_grid() const
{
    const int f = cfg_.input_downscale * cfg_.pool;
    return {cfg_.image_height / f, cfg_.image_width / f, cfg_.image_height, cfg_.image_width};
}

nn::Tensor ToyCorrector::build_input(const Image& image, const KeypointSet& keypoints) const
{
    require_image(image, cfg_.image_height, cfg_.image_width);
    require(static_cast<int>(keypoints.size()) == cfg_.num_keypoints, Errc::invalid_argument,
            "corrector keypoint count mismatch");
    const int K = cfg_.num_keypoints;
    const GridSpec in = input_grid();
    const Image small = downscale(image, cfg_.input_downscale);
    const HeatmapStack rendered = render_heatmaps(keypoints, in, cfg_.target_sigma_cells);
    nn::Tensor x(1 + K + 2, in.height / cfg_.pool, in.width / cfg_.pool);
    pool_into(x, 0, small.pixels(), 1, in.height, in.width, cfg_.pool);
    pool_into(x, 1, rendered.data(), K, in.height, in.width, cfg_.pool);
    fill_coordinates(x, 1 + K);
    return x;
}

HeatmapStack ToyCorrector::forward(const Image& image, const KeypointSet& keypoints) const
{
    return logits_to_heatmaps(net_.forward(build_input(image, keypoints), nullptr), output_grid());
}

// ---------------------------------------------------------------------------

ToyDetector::ToyDetector(DetectorConfig config, std::uint64_t seed) : cfg_(std::move(config)), seed_(seed)
{
    require(cfg_.window >= 1, Errc::invalid_argument, "detector window must be positive");
    require(cfg_.widths.size() == 4 && cfg_.crop_size % 16 == 0 && cfg_.crop_size >= 16, Errc::invalid_argument,
            "detector needs four stages and a crop divisible by 16");
    Rng rng(seed);
    int in = 1 + cfg_.window + 2;
    for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
        auto& conv = net_.add<nn::Conv2d>(in, cfg_.widths[i], 3, 2, 1);
        conv.init(rng);
        if (i == 0) conv.set_needs_input_grad(false);
        net_.add<nn::Relu>();
        in = cfg_.widths[i];
    }
    const int side = cfg_.crop_size / 16;
    auto& fc1 = net_.add<nn::Linear>(in * side * side, cfg_.hidden);
    fc1.init(rng);
    net_.add<nn::Relu>();
    auto& fc2 = net_.add<nn::Linear>(cfg_.hidden, cfg_.window);
    fc2.init(rng);
    for (float& b : fc2.bias().value) b = -2.0f;
}

std::vector<nn::Param*> ToyDetector::params()
{
    std::vector<nn::Param*> out;
    net_.collect(out);
    return out;
}

nn::Tensor ToyDetector::build_input(const Image& image, const KeypointSet& keypoints, std::span<const int> window) const
{
    require(static_cast<int>(window.size()) == cfg_.window, Errc::invalid_argument,
            "detector window size mismatch");
    for (int i : window)
        require(i >= 0 && i < static_cast<int>(keypoints.size()), Errc::out_of_range, "window index out of range");
    const CropResult crop = crop_around(image, keypoints, window, cfg_.crop_size, cfg_.crop_size, cfg_.crop_margin);
    const HeatmapStack rendered =
        render_heatmaps(crop.keypoints, GridSpec::same_as_image(cfg_.crop_size, cfg_.crop_size), cfg_.sigma_cells);
    nn::Tensor x(1 + cfg_.window + 2, cfg_.crop_size, cfg_.crop_size);
    std::copy(crop.image.pixels().begin(), crop.image.pixels().end(), x.channel(0));
    std::copy(rendered.data().begin(), rendered.data().end(), x.channel(1));
    fill_coordinates(x, 1 + cfg_.window);
    return x;
}

std::vector<double> ToyDetector::forward(const Image& image, const KeypointSet& keypoints,
                                         std::span<const int> window) const
{
    const nn::Tensor logits = net_.forward(build_input(image, keypoints, window), nullptr);
    std::vector<double> out(logits.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = nn::sigmoid(logits.data[i]);
    return out;
}

}  // namespace keybot::models
