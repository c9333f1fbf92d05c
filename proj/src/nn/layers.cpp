#include "keybot/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "keybot/core/error.hpp"

namespace keybot::nn {

namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecF = Eigen::Matrix<float, Eigen::Dynamic, 1>;

void he_init(Param& p, int fan_in, Rng& rng)
{
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (float& v : p.value) v = dist(rng);
}

}  // namespace

float sigmoid(float x)
{
    if (x >= 0) return 1.0f / (1.0f + std::exp(-x));
    float e = std::exp(x);
    return e / (1.0f + e);
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, int dilation)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding), dil_(dilation),
      weight_(static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel), bias_(out_channels)
{
    require(in_ > 0 && out_ > 0 && k_ > 0 && stride_ > 0 && pad_ >= 0 && dil_ > 0, Errc::invalid_argument,
            "invalid conv geometry");
    bias_.decay = false;
}

void Conv2d::init(Rng& rng)
{
    he_init(weight_, in_ * k_ * k_, rng);
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

void Conv2d::collect(std::vector<Param*>& out)
{
    out.push_back(&weight_);
    out.push_back(&bias_);
}

Tensor Conv2d::forward(const Tensor& x, Saved* saved) const
{
    require(x.c == in_, Errc::invalid_argument, "conv input channel mismatch");
    const int ho = out_size(x.h), wo = out_size(x.w);
    require(ho > 0 && wo > 0, Errc::invalid_argument, "conv input too small");
    const int rows = in_ * k_ * k_;
    const int cols = ho * wo;

    Tensor col;
    const float* col_ptr = x.data.data();
    if (!is_pointwise()) {
        col = Tensor(1, rows, cols);
        float* dst = col.data.data();
        for (int ci = 0; ci < in_; ++ci) {
            const float* src = x.channel(ci);
            for (int ki = 0; ki < k_; ++ki)
                for (int kj = 0; kj < k_; ++kj) {
                    float* row = dst + static_cast<std::size_t>((ci * k_ + ki) * k_ + kj) * cols;
                    for (int r = 0; r < ho; ++r) {
                        int ir = r * stride_ - pad_ + ki * dil_;
                        float* out_row = row + r * wo;
                        if (ir < 0 || ir >= x.h) {
                            std::fill(out_row, out_row + wo, 0.0f);
                            continue;
                        }
                        const float* in_row = src + static_cast<std::size_t>(ir) * x.w;
                        for (int c = 0; c < wo; ++c) {
                            int ic = c * stride_ - pad_ + kj * dil_;
                            out_row[c] = (ic >= 0 && ic < x.w) ? in_row[ic] : 0.0f;
                        }
                    }
                }
        }
        col_ptr = col.data.data();
    }

    Tensor y(out_, ho, wo);
    CMapR W(weight_.value.data(), out_, rows);
    CMapR C(col_ptr, rows, cols);
    MapR Y(y.data.data(), out_, cols);
    Y.noalias() = W * C;
    for (int o = 0; o < out_; ++o) Y.row(o).array() += bias_.value[o];

    if (saved) {
        saved->input = Tensor();
        saved->input.c = x.c;
        saved->input.h = x.h;
        saved->input.w = x.w;
        if (is_pointwise()) {
            saved->aux = x;
        } else {
            saved->aux = std::move(col);
        }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, const Saved& saved)
{
    const Tensor& shape = saved.input;
    const int ho = grad_out.h, wo = grad_out.w;
    const int rows = in_ * k_ * k_;
    const int cols = ho * wo;
    CMapR dY(grad_out.data.data(), out_, cols);
    CMapR C(saved.aux.data.data(), rows, cols);
    MapR dW(weight_.grad.data(), out_, rows);
    dW.noalias() += dY * C.transpose();
    for (int o = 0; o < out_; ++o) bias_.grad[o] += dY.row(o).sum();

    if (!needs_input_grad_) return Tensor();
    CMapR W(weight_.value.data(), out_, rows);
    if (is_pointwise()) {
        Tensor dx(shape.c, shape.h, shape.w);
        MapR dX(dx.data.data(), rows, cols);
        dX.noalias() = W.transpose() * dY;
        return dx;
    }
    MatR dcol = W.transpose() * dY;
    Tensor dx(shape.c, shape.h, shape.w);
    for (int ci = 0; ci < in_; ++ci) {
        float* dst = dx.channel(ci);
        for (int ki = 0; ki < k_; ++ki)
            for (int kj = 0; kj < k_; ++kj) {
                const float* row = dcol.data() + static_cast<std::size_t>((ci * k_ + ki) * k_ + kj) * cols;
                for (int r = 0; r < ho; ++r) {
                    int ir = r * stride_ - pad_ + ki * dil_;
                    if (ir < 0 || ir >= shape.h) continue;
                    float* in_row = dst + static_cast<std::size_t>(ir) * shape.w;
                    const float* g = row + r * wo;
                    for (int c = 0; c < wo; ++c) {
                        int ic = c * stride_ - pad_ + kj * dil_;
                        if (ic >= 0 && ic < shape.w) in_row[ic] += g[c];
                    }
                }
            }
    }
    return dx;
}

DepthwiseConv2d::DepthwiseConv2d(int channels, int kernel)
    : ch_(channels), k_(kernel), weight_(static_cast<std::size_t>(channels) * kernel * kernel)
{
    require(channels > 0 && kernel > 0 && kernel % 2 == 1, Errc::invalid_argument, "depthwise kernel must be odd");
}

void DepthwiseConv2d::init_identity(float center)
{
    std::fill(weight_.value.begin(), weight_.value.end(), 0.0f);
    const int mid = (k_ / 2) * k_ + k_ / 2;
    for (int c = 0; c < ch_; ++c) weight_.value[c * k_ * k_ + mid] = center;
}

void DepthwiseConv2d::collect(std::vector<Param*>& out) { out.push_back(&weight_); }

Tensor DepthwiseConv2d::forward(const Tensor& x, Saved* saved) const
{
    require(x.c == ch_, Errc::invalid_argument, "depthwise channel mismatch");
    const int p = k_ / 2;
    Tensor y(x.c, x.h, x.w);
    for (int c = 0; c < ch_; ++c) {
        const float* src = x.channel(c);
        float* dst = y.channel(c);
        const float* wk = weight_.value.data() + c * k_ * k_;
        for (int ki = 0; ki < k_; ++ki)
            for (int kj = 0; kj < k_; ++kj) {
                const float wv = wk[ki * k_ + kj];
                if (wv == 0.0f) continue;
                const int dr = ki - p, dc = kj - p;
                for (int r = std::max(0, -dr); r < std::min(x.h, x.h - dr); ++r) {
                    const float* in_row = src + static_cast<std::size_t>(r + dr) * x.w;
                    float* out_row = dst + static_cast<std::size_t>(r) * x.w;
                    for (int col = std::max(0, -dc); col < std::min(x.w, x.w - dc); ++col)
                        out_row[col] += wv * in_row[col + dc];
                }
            }
    }
    if (saved) saved->input = x;
    return y;
}

Tensor DepthwiseConv2d::backward(const Tensor& grad_out, const Saved& saved)
{
    const Tensor& x = saved.input;
    const int p = k_ / 2;
    Tensor dx(x.c, x.h, x.w);
    for (int c = 0; c < ch_; ++c) {
        const float* src = x.channel(c);
        const float* g = grad_out.channel(c);
        float* dsrc = dx.channel(c);
        const float* wk = weight_.value.data() + c * k_ * k_;
        float* gw = weight_.grad.data() + c * k_ * k_;
        for (int ki = 0; ki < k_; ++ki)
            for (int kj = 0; kj < k_; ++kj) {
                const int dr = ki - p, dc = kj - p;
                const float wv = wk[ki * k_ + kj];
                double acc = 0.0;
                for (int r = std::max(0, -dr); r < std::min(x.h, x.h - dr); ++r) {
                    const float* in_row = src + static_cast<std::size_t>(r + dr) * x.w;
                    float* din_row = dsrc + static_cast<std::size_t>(r + dr) * x.w;
                    const float* g_row = g + static_cast<std::size_t>(r) * x.w;
                    for (int col = std::max(0, -dc); col < std::min(x.w, x.w - dc); ++col) {
                        acc += g_row[col] * in_row[col + dc];
                        din_row[col + dc] += wv * g_row[col];
                    }
                }
                gw[ki * k_ + kj] += static_cast<float>(acc);
            }
    }
    return dx;
}

Linear::Linear(int in_features, int out_features)
    : in_(in_features), out_(out_features), weight_(static_cast<std::size_t>(in_features) * out_features),
      bias_(out_features)
{
    bias_.decay = false;
}

void Linear::init(Rng& rng)
{
    he_init(weight_, in_, rng);
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

void Linear::collect(std::vector<Param*>& out)
{
    out.push_back(&weight_);
    out.push_back(&bias_);
}

Tensor Linear::forward(const Tensor& x, Saved* saved) const
{
    require(static_cast<int>(x.size()) == in_, Errc::invalid_argument, "linear input size mismatch");
    Tensor y(out_, 1, 1);
    CMapR W(weight_.value.data(), out_, in_);
    Eigen::Map<const VecF> X(x.data.data(), in_);
    Eigen::Map<VecF> Y(y.data.data(), out_);
    Y.noalias() = W * X;
    for (int o = 0; o < out_; ++o) y.data[o] += bias_.value[o];
    if (saved) saved->input = x;
    return y;
}

Tensor Linear::backward(const Tensor& grad_out, const Saved& saved)
{
    Eigen::Map<const VecF> dY(grad_out.data.data(), out_);
    Eigen::Map<const VecF> X(saved.input.data.data(), in_);
    MapR dW(weight_.grad.data(), out_, in_);
    dW.noalias() += dY * X.transpose();
    for (int o = 0; o < out_; ++o) bias_.grad[o] += grad_out.data[o];
    Tensor dx(saved.input.c, saved.input.h, saved.input.w);
    CMapR W(weight_.value.data(), out_, in_);
    Eigen::Map<VecF> dX(dx.data.data(), in_);
    dX.noalias() = W.transpose() * dY;
    return dx;
}

Tensor Relu::forward(const Tensor& x, Saved* saved) const
{
    Tensor y = x;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    if (saved) saved->aux = y;
    return y;
}

Tensor Relu::backward(const Tensor& grad_out, const Saved& saved)
{
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (saved.aux.data[i] <= 0.0f) dx.data[i] = 0.0f;
    return dx;
}

Tensor AvgPool::forward(const Tensor& x, Saved* saved) const
{
    require(x.h % f_ == 0 && x.w % f_ == 0, Errc::invalid_argument, "avgpool factor must divide input");
    Tensor y(x.c, x.h / f_, x.w / f_);
    const float norm = 1.0f / static_cast<float>(f_ * f_);
    for (int k = 0; k < x.c; ++k) {
        const float* src = x.channel(k);
        float* dst = y.channel(k);
        for (int r = 0; r < x.h; ++r)
            for (int c = 0; c < x.w; ++c) dst[(r / f_) * y.w + c / f_] += src[r * x.w + c];
        for (std::size_t i = 0; i < y.plane(); ++i) dst[i] *= norm;
    }
    if (saved) {
        saved->input = Tensor();
        saved->input.c = x.c;
        saved->input.h = x.h;
        saved->input.w = x.w;
    }
    return y;
}

Tensor AvgPool::backward(const Tensor& grad_out, const Saved& saved)
{
    const Tensor& s = saved.input;
    Tensor dx(s.c, s.h, s.w);
    const float norm = 1.0f / static_cast<float>(f_ * f_);
    for (int k = 0; k < s.c; ++k) {
        const float* g = grad_out.channel(k);
        float* dst = dx.channel(k);
        for (int r = 0; r < s.h; ++r)
            for (int c = 0; c < s.w; ++c) dst[r * s.w + c] = g[(r / f_) * grad_out.w + c / f_] * norm;
    }
    return dx;
}

Tensor Upsample2x::forward(const Tensor& x, Saved* saved) const
{
    Tensor y(x.c, x.h * 2, x.w * 2);
    for (int k = 0; k < x.c; ++k) {
        const float* src = x.channel(k);
        float* dst = y.channel(k);
        for (int r = 0; r < y.h; ++r)
            for (int c = 0; c < y.w; ++c) dst[r * y.w + c] = src[(r / 2) * x.w + c / 2];
    }
    (void)saved;
    return y;
}

Tensor Upsample2x::backward(const Tensor& grad_out, const Saved& saved)
{
    (void)saved;
    Tensor dx(grad_out.c, grad_out.h / 2, grad_out.w / 2);
    for (int k = 0; k < grad_out.c; ++k) {
        const float* g = grad_out.channel(k);
        float* dst = dx.channel(k);
        for (int r = 0; r < grad_out.h; ++r)
            for (int c = 0; c < grad_out.w; ++c) dst[(r / 2) * dx.w + c / 2] += g[r * grad_out.w + c];
    }
    return dx;
}

Tensor Sequential::forward(const Tensor& x, std::vector<Saved>* saved) const
{
    if (saved) saved->assign(layers_.size(), Saved{});
    Tensor cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) cur = layers_[i]->forward(cur, saved ? &(*saved)[i] : nullptr);
    return cur;
}

Tensor Sequential::backward(const Tensor& grad_out, const std::vector<Saved>& saved)
{
    Tensor g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, saved[i]);
    return g;
}

void Sequential::collect(std::vector<Param*>& out)
{
    for (auto& l : layers_) l->collect(out);
}

double bce_with_logits(const std::vector<float>& logits, const std::vector<float>& targets, std::vector<float>* grad)
{
    require(logits.size() == targets.size() && !logits.empty(), Errc::invalid_argument, "bce size mismatch");
    const double n = static_cast<double>(logits.size());
    double total = 0.0;
    if (grad) grad->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double x = logits[i], y = targets[i];
        total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        if (grad) (*grad)[i] = static_cast<float>((sigmoid(logits[i]) - y) / n);
    }
    return total / n;
}

}  // namespace keybot::nn
