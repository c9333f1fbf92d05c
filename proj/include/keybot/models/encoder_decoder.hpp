#pragma once

#include <cstdint>
#include <vector>

#include "keybot/nn/layers.hpp"

namespace keybot::models {

/// Shallow U-shaped network: three stride-2 stages down, three nearest
/// upsampling stages back with skip concatenations, a 1x1 head, and optional
/// depthwise pass-through paths from selected input channel ranges straight
/// onto the output logits.
class EncoderDecoder {
public:
    struct Config {
        int in_channels = 1;
        int out_channels = 1;
        std::vector<int> widths = {24, 48, 64, 96};
        /// Offsets of input channel ranges (each out_channels long) routed
        /// through a depthwise 5x5 kernel onto the logits.
        std::vector<int> passthrough_offsets;
        float passthrough_init = 4.0f;
        float output_prior = 0.01f;
    };

    struct Trace {
        std::vector<nn::Saved> saved;
        std::vector<int> cat_channels[3];
    };

    EncoderDecoder(Config config, std::uint64_t seed);

    const Config& config() const { return cfg_; }
    /// Logits at the input's spatial resolution; input H, W divisible by 8.
    nn::Tensor forward(const nn::Tensor& input, Trace* trace) const;
    void backward(const nn::Tensor& grad_logits, const Trace& trace);
    std::vector<nn::Param*> params();

private:
    Config cfg_;
    nn::Conv2d stem1_, stem2_, d1a_, d1b_, d2a_, d2b_, d3a_, d3b_, u3_, u2_, u1_, head_;
    std::vector<nn::DepthwiseConv2d> passthrough_;
    nn::Relu relu_;
    nn::Upsample2x up_;
};

}  // namespace keybot::models
