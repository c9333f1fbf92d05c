#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "keybot/core/random.hpp"
#include "keybot/nn/tensor.hpp"

namespace keybot::nn {

/// Trainable parameter with its gradient and AdamW moments.
struct Param {
    std::vector<float> value;
    std::vector<float> grad;
    std::vector<float> m;
    std::vector<float> v;
    bool decay = true;

    explicit Param(std::size_t n = 0) : value(n, 0.0f), grad(n, 0.0f), m(n, 0.0f), v(n, 0.0f) {}
};

/// Per-forward record a layer needs for its backward pass. Forwards are
/// const so trained networks can serve concurrent inference; only backward
/// (training) touches parameter gradients.
struct Saved {
    Tensor input;
    Tensor aux;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, Saved* saved) const = 0;
    virtual Tensor backward(const Tensor& grad_out, const Saved& saved) = 0;
    virtual void collect(std::vector<Param*>& out) { (void)out; }
};

class Conv2d : public Layer {
public:
    Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, int dilation = 1);

    Tensor forward(const Tensor& x, Saved* saved) const override;
    Tensor backward(const Tensor& grad_out, const Saved& saved) override;
    void collect(std::vector<Param*>& out) override;

    void init(Rng& rng);
    /// First layers skip the input gradient.
    void set_needs_input_grad(bool v) { needs_input_grad_ = v; }

    Param& weight() { return weight_; }
    Param& bias() { return bias_; }

private:
    int out_size(int n) const { return (n + 2 * pad_ - dil_ * (k_ - 1) - 1) / stride_ + 1; }
    bool is_pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

    int in_, out_, k_, stride_, pad_, dil_;
    bool needs_input_grad_ = true;
    Param weight_;
    Param bias_;
};

/// Per-channel k x k convolution with same padding, no bias.
class DepthwiseConv2d : public Layer {
public:
    DepthwiseConv2d(int channels, int kernel);

    Tensor forward(const Tensor& x, Saved* saved) const override;
    Tensor backward(const Tensor& grad_out, const Saved& saved) override;
    void collect(std::vector<Param*>& out) override;

    /// Every channel starts as `center` at the kernel center, zero elsewhere.
    void init_identity(float center);

private:
    int ch_, k_;
    Param weight_;
};

class Linear : public Layer {
public:
    Linear(int in_features, int out_features);

    Tensor forward(const Tensor& x, Saved* saved) const override;
    Tensor backward(const Tensor& grad_out, const Saved& saved) override;
    void collect(std::vector<Param*>& out) override;
    void init(Rng& rng);

    Param& bias() { return bias_; }

private:
    int in_, out_;
    Param weight_;
    Param bias_;
};

class Relu : public Layer {
public:
    Tensor forward(const Tensor& x, Saved* saved) const override;
    Tensor backward(const Tensor& grad_out, const Saved& saved) override;
};

class AvgPool : public Layer {
public:
    explicit AvgPool(int factor) : f_(factor) {}
    Tensor forward(const Tensor& x, Saved* saved) const override;
    Tensor backward(const Tensor& grad_out, const Saved& saved) override;

private:
    int f_;
};

class Upsample2x : public Layer {
public:
    Tensor forward(const Tensor& x, Saved* saved) const override;
    Tensor backward(const Tensor& grad_out, const Saved& saved) override;
};

/// Layers applied in order; keeps one Saved slot per layer.
class Sequential {
public:
    template <class L, class... Args>
    L& add(Args&&... args)
    {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    Tensor forward(const Tensor& x, std::vector<Saved>* saved) const;
    Tensor backward(const Tensor& grad_out, const std::vector<Saved>& saved);
    void collect(std::vector<Param*>& out);
    std::size_t size() const { return layers_.size(); }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// Mean binary cross-entropy of sigmoid(logits) against targets; writes
/// d(loss)/d(logits) into grad when non-null.
double bce_with_logits(const std::vector<float>& logits, const std::vector<float>& targets,
                       std::vector<float>* grad);

float sigmoid(float x);

}  // namespace keybot::nn
