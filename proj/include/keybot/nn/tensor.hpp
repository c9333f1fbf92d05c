#pragma once

#include <cstddef>
#include <vector>

namespace keybot::nn {

/// Single-sample activation volume, channel-major (C x H x W).
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int channels, int height, int width, float fill = 0.0f)
        : c(channels), h(height), w(width), data(static_cast<std::size_t>(channels) * height * width, fill)
    {
    }

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    float* channel(int k) { return data.data() + k * plane(); }
    const float* channel(int k) const { return data.data() + k * plane(); }
    float& at(int k, int r, int col) { return data[(k * static_cast<std::size_t>(h) + r) * w + col]; }
    float at(int k, int r, int col) const { return data[(k * static_cast<std::size_t>(h) + r) * w + col]; }
};

/// Channel concatenation of tensors sharing H x W.
Tensor concat(const std::vector<const Tensor*>& parts);

/// Splits a gradient produced for concat() back into per-part gradients.
std::vector<Tensor> split(const Tensor& grad, const std::vector<int>& channels);

void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace keybot::nn
