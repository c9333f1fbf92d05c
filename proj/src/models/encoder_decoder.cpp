#include "keybot/models/encoder_decoder.hpp"

#include <algorithm>
#include <cmath>

#include "keybot/core/error.hpp"

namespace keybot::models {

namespace {

enum Slot {
    kStem1, kStem1Relu, kStem2, kF1, kD1a, kD1aRelu, kD1b, kF2, kD2a, kD2aRelu, kD2b, kF3,
    kD3a, kD3aRelu, kD3b, kF4, kU3, kG3, kU2, kG2, kU1, kG1, kHead, kPassthrough
};

nn::Tensor slice_channels(const nn::Tensor& x, int offset, int count)
{
    nn::Tensor out(count, x.h, x.w);
    std::copy(x.channel(offset), x.channel(offset) + static_cast<std::size_t>(count) * x.plane(), out.data.begin());
    return out;
}

}  // namespace

EncoderDecoder::EncoderDecoder(Config config, std::uint64_t seed)
    : cfg_(std::move(config)),
      stem1_(cfg_.in_channels, cfg_.widths.at(0), 1, 1, 0),
      stem2_(cfg_.widths[0], cfg_.widths[0], 3, 1, 1),
      d1a_(cfg_.widths[0], cfg_.widths.at(1), 3, 2, 1),
      d1b_(cfg_.widths[1], cfg_.widths[1], 3, 1, 1),
      d2a_(cfg_.widths[1], cfg_.widths.at(2), 3, 2, 1),
      d2b_(cfg_.widths[2], cfg_.widths[2], 3, 1, 1),
      d3a_(cfg_.widths[2], cfg_.widths.at(3), 3, 2, 1),
      d3b_(cfg_.widths[3], cfg_.widths[3], 3, 1, 2, 2),
      u3_(cfg_.widths[3] + cfg_.widths[2], cfg_.widths[2], 3, 1, 1),
      u2_(cfg_.widths[2] + cfg_.widths[1], cfg_.widths[1], 3, 1, 1),
      u1_(cfg_.widths[1] + cfg_.widths[0], cfg_.widths[0], 3, 1, 1),
      head_(cfg_.widths[0], cfg_.out_channels, 1, 1, 0)
{
    require(cfg_.widths.size() == 4, Errc::invalid_argument, "encoder-decoder needs four widths");
    for (int off : cfg_.passthrough_offsets)
        require(off >= 0 && off + cfg_.out_channels <= cfg_.in_channels, Errc::invalid_argument,
                "pass-through range exceeds input channels");
    Rng rng(seed);
    for (nn::Conv2d* c : {&stem1_, &stem2_, &d1a_, &d1b_, &d2a_, &d2b_, &d3a_, &d3b_, &u3_, &u2_, &u1_, &head_})
        c->init(rng);
    stem1_.set_needs_input_grad(false);
    for (float& w : head_.weight().value) w *= 0.1f;
    const float prior_logit = std::log(cfg_.output_prior / (1.0f - cfg_.output_prior));
    for (float& b : head_.bias().value) b = prior_logit;
    for (std::size_t i = 0; i < cfg_.passthrough_offsets.size(); ++i) {
        passthrough_.emplace_back(cfg_.out_channels, 5);
        // First range follows its input (hints), later ranges start neutral.
        passthrough_.back().init_identity(i == 0 ? cfg_.passthrough_init : 0.0f);
    }
}

std::vector<nn::Param*> EncoderDecoder::params()
{
    std::vector<nn::Param*> out;
    for (nn::Conv2d* c : {&stem1_, &stem2_, &d1a_, &d1b_, &d2a_, &d2b_, &d3a_, &d3b_, &u3_, &u2_, &u1_, &head_})
        c->collect(out);
    for (auto& p : passthrough_) p.collect(out);
    return out;
}

nn::Tensor EncoderDecoder::forward(const nn::Tensor& input, Trace* trace) const
{
    require(input.c == cfg_.in_channels, Errc::invalid_argument, "encoder-decoder input channel mismatch");
    require(input.h % 8 == 0 && input.w % 8 == 0, Errc::invalid_argument, "encoder-decoder input must be divisible by 8");
    const std::size_t slots = kPassthrough + passthrough_.size();
    if (trace) trace->saved.assign(slots, nn::Saved{});
    auto S = [&](int slot) -> nn::Saved* { return trace ? &trace->saved[slot] : nullptr; };

    nn::Tensor t = relu_.forward(stem1_.forward(input, S(kStem1)), S(kStem1Relu));
    nn::Tensor f1 = relu_.forward(stem2_.forward(t, S(kStem2)), S(kF1));
    t = relu_.forward(d1a_.forward(f1, S(kD1a)), S(kD1aRelu));
    nn::Tensor f2 = relu_.forward(d1b_.forward(t, S(kD1b)), S(kF2));
    t = relu_.forward(d2a_.forward(f2, S(kD2a)), S(kD2aRelu));
    nn::Tensor f3 = relu_.forward(d2b_.forward(t, S(kD2b)), S(kF3));
    t = relu_.forward(d3a_.forward(f3, S(kD3a)), S(kD3aRelu));
    nn::Tensor f4 = relu_.forward(d3b_.forward(t, S(kD3b)), S(kF4));

    nn::Tensor up = up_.forward(f4, nullptr);
    nn::Tensor g3 = relu_.forward(u3_.forward(nn::concat({&up, &f3}), S(kU3)), S(kG3));
    up = up_.forward(g3, nullptr);
    nn::Tensor g2 = relu_.forward(u2_.forward(nn::concat({&up, &f2}), S(kU2)), S(kG2));
    up = up_.forward(g2, nullptr);
    nn::Tensor g1 = relu_.forward(u1_.forward(nn::concat({&up, &f1}), S(kU1)), S(kG1));
    nn::Tensor logits = head_.forward(g1, S(kHead));
    for (std::size_t i = 0; i < passthrough_.size(); ++i) {
        nn::Tensor part = slice_channels(input, cfg_.passthrough_offsets[i], cfg_.out_channels);
        nn::add_inplace(logits, passthrough_[i].forward(part, S(static_cast<int>(kPassthrough + i))));
    }
    if (trace) {
        trace->cat_channels[0] = {f4.c, f3.c};
        trace->cat_channels[1] = {g3.c, f2.c};
        trace->cat_channels[2] = {g2.c, f1.c};
    }
    return logits;
}

void EncoderDecoder::backward(const nn::Tensor& grad_logits, const Trace& trace)
{
    const auto& s = trace.saved;
    for (std::size_t i = 0; i < passthrough_.size(); ++i) passthrough_[i].backward(grad_logits, s[kPassthrough + i]);

    nn::Tensor g = relu_.backward(head_.backward(grad_logits, s[kHead]), s[kG1]);
    auto parts = nn::split(u1_.backward(g, s[kU1]), trace.cat_channels[2]);
    nn::Tensor d_f1 = std::move(parts[1]);
    g = relu_.backward(up_.backward(parts[0], {}), s[kG2]);
    parts = nn::split(u2_.backward(g, s[kU2]), trace.cat_channels[1]);
    nn::Tensor d_f2 = std::move(parts[1]);
    g = relu_.backward(up_.backward(parts[0], {}), s[kG3]);
    parts = nn::split(u3_.backward(g, s[kU3]), trace.cat_channels[0]);
    nn::Tensor d_f3 = std::move(parts[1]);
    nn::Tensor d_f4 = up_.backward(parts[0], {});

    g = relu_.backward(d_f4, s[kF4]);
    g = relu_.backward(d3b_.backward(g, s[kD3b]), s[kD3aRelu]);
    nn::add_inplace(d_f3, d3a_.backward(g, s[kD3a]));

    g = relu_.backward(d_f3, s[kF3]);
    g = relu_.backward(d2b_.backward(g, s[kD2b]), s[kD2aRelu]);
    nn::add_inplace(d_f2, d2a_.backward(g, s[kD2a]));

    g = relu_.backward(d_f2, s[kF2]);
    g = relu_.backward(d1b_.backward(g, s[kD1b]), s[kD1aRelu]);
    nn::add_inplace(d_f1, d1a_.backward(g, s[kD1a]));

    g = relu_.backward(d_f1, s[kF1]);
    g = relu_.backward(stem2_.backward(g, s[kStem2]), s[kStem1Relu]);
    stem1_.backward(g, s[kStem1]);
}

}  // namespace keybot::models
