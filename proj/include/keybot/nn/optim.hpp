#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "keybot/nn/layers.hpp"

namespace keybot::nn {

struct AdamWConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-2;
};

class AdamW {
public:
    AdamW(std::vector<Param*> params, AdamWConfig config);

    void zero_grad();
    /// Applies one update using gradients scaled by `grad_scale` (1/batch).
    void step(double grad_scale = 1.0);
    std::int64_t steps() const { return t_; }

private:
    std::vector<Param*> params_;
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
};

/// Raw parameter values, in collection order.
std::vector<std::vector<float>> snapshot(const std::vector<Param*>& params);
void restore(const std::vector<Param*>& params, const std::vector<std::vector<float>>& values);

void write_params(std::ostream& out, const std::vector<Param*>& params);
void read_params(std::istream& in, const std::vector<Param*>& params);

}  // namespace keybot::nn
