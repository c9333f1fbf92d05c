#include "keybot/nn/tensor.hpp"

#include <algorithm>

#include "keybot/core/error.hpp"

namespace keybot::nn {

Tensor concat(const std::vector<const Tensor*>& parts)
{
    require(!parts.empty(), Errc::invalid_argument, "concat of nothing");
    int h = parts.front()->h, w = parts.front()->w, c = 0;
    for (const Tensor* t : parts) {
        require(t->h == h && t->w == w, Errc::invalid_argument, "concat spatial mismatch");
        c += t->c;
    }
    Tensor out;
    out.c = c;
    out.h = h;
    out.w = w;
    out.data.reserve(static_cast<std::size_t>(c) * h * w);
    for (const Tensor* t : parts) out.data.insert(out.data.end(), t->data.begin(), t->data.end());
    return out;
}

std::vector<Tensor> split(const Tensor& grad, const std::vector<int>& channels)
{
    std::vector<Tensor> out;
    std::size_t offset = 0;
    for (int ch : channels) {
        Tensor t;
        t.c = ch;
        t.h = grad.h;
        t.w = grad.w;
        std::size_t n = static_cast<std::size_t>(ch) * grad.plane();
        t.data.assign(grad.data.begin() + offset, grad.data.begin() + offset + n);
        offset += n;
        out.push_back(std::move(t));
    }
    require(offset == grad.size(), Errc::invalid_argument, "split channel counts do not add up");
    return out;
}

void add_inplace(Tensor& dst, const Tensor& src)
{
    require(dst.size() == src.size(), Errc::invalid_argument, "tensor size mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace keybot::nn
