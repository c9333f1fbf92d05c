#include "keybot/nn/optim.hpp"

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

#include "keybot/core/error.hpp"

namespace keybot::nn {

AdamW::AdamW(std::vector<Param*> params, AdamWConfig config) : params_(std::move(params)), cfg_(config)
{
    require(cfg_.learning_rate > 0.0, Errc::invalid_argument, "learning rate must be positive");
}

void AdamW::zero_grad()
{
    for (Param* p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

void AdamW::step(double grad_scale)
{
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const float lr = static_cast<float>(cfg_.learning_rate);
    for (Param* p : params_) {
        const float decay = p->decay ? static_cast<float>(1.0 - cfg_.learning_rate * cfg_.weight_decay) : 1.0f;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            float g = static_cast<float>(p->grad[i] * grad_scale);
            p->m[i] = static_cast<float>(b1 * p->m[i] + (1.0 - b1) * g);
            p->v[i] = static_cast<float>(b2 * p->v[i] + (1.0 - b2) * g * g);
            float mhat = static_cast<float>(p->m[i] / c1);
            float vhat = static_cast<float>(p->v[i] / c2);
            p->value[i] = p->value[i] * decay - lr * mhat / (std::sqrt(vhat) + static_cast<float>(cfg_.epsilon));
        }
    }
}

std::vector<std::vector<float>> snapshot(const std::vector<Param*>& params)
{
    std::vector<std::vector<float>> out;
    out.reserve(params.size());
    for (const Param* p : params) out.push_back(p->value);
    return out;
}

void restore(const std::vector<Param*>& params, const std::vector<std::vector<float>>& values)
{
    require(params.size() == values.size(), Errc::invalid_argument, "snapshot does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i]->value.size() == values[i].size(), Errc::invalid_argument, "snapshot tensor size mismatch");
        params[i]->value = values[i];
    }
}

void write_params(std::ostream& out, const std::vector<Param*>& params)
{
    std::uint64_t count = params.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    for (const Param* p : params) {
        std::uint64_t n = p->value.size();
        out.write(reinterpret_cast<const char*>(&n), sizeof n);
        out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(n * sizeof(float)));
    }
}

void read_params(std::istream& in, const std::vector<Param*>& params)
{
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    require(in && count == params.size(), Errc::io_error, "checkpoint parameter count mismatch");
    for (Param* p : params) {
        std::uint64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), sizeof n);
        require(in && n == p->value.size(), Errc::io_error, "checkpoint tensor size mismatch");
        in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(n * sizeof(float)));
        require(static_cast<bool>(in), Errc::io_error, "truncated checkpoint");
    }
}

}  // namespace keybot::nn
