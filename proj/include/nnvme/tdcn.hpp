#pragma once

// Time-domain convolutional network (Conv-TasNet style): learned filterbank
// encoder, stack of dilated depthwise-separable residual blocks, per-head
// encoder-domain masks, and a transposed-conv decoder. One output head for
// virtual-microphone estimation, several for source separation.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnvme/autodiff.hpp"
#include "nnvme/nn_ops.hpp"
#include "nnvme/rng.hpp"

namespace nnvme {

struct TdcnConfig {
  int in_channels = 1;       // C_r for the VM estimator, 1 for the separator
  int basis = 64;            // N: encoder filter count
  int kernel = 16;           // L: encoder kernel, stride L/2
  int bottleneck = 32;       // B
  int hidden = 64;           // H
  int conv_kernel = 3;       // P
  int blocks_per_repeat = 4; // X
  int repeats = 2;           // R
  int heads = 1;

  void validate() const {
    auto pos = [](int v, const char* name) {
      if (v <= 0) throw std::invalid_argument(std::string("TdcnConfig: ") + name + " must be positive");
    };
    pos(in_channels, "in_channels");
    pos(basis, "basis");
    pos(kernel, "kernel");
    pos(bottleneck, "bottleneck");
    pos(hidden, "hidden");
    pos(conv_kernel, "conv_kernel");
    pos(blocks_per_repeat, "blocks_per_repeat");
    pos(repeats, "repeats");
    pos(heads, "heads");
    if (kernel % 2 != 0) throw std::invalid_argument("TdcnConfig: kernel must be even");
    if (conv_kernel % 2 != 1)
      throw std::invalid_argument("TdcnConfig: conv_kernel must be odd (symmetric dilation padding)");
  }
};

namespace tdcndetail {

// Uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline ad::Tensor init_tensor(ad::Shape shape, std::int64_t fan_in, Rng& rng,
                              std::vector<ad::Tensor>& registry) {
  std::vector<double> data(static_cast<std::size_t>(ad::numel(shape)));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  auto t = ad::Tensor::leaf(std::move(shape), std::move(data), /*requires_grad=*/true);
  t.shared()->is_param = true;
  registry.push_back(t);
  return t;
}

inline ad::Tensor const_tensor(ad::Shape shape, double fill, std::vector<ad::Tensor>& registry) {
  std::vector<double> data(static_cast<std::size_t>(ad::numel(shape)), fill);
  auto t = ad::Tensor::leaf(std::move(shape), std::move(data), /*requires_grad=*/true);
  t.shared()->is_param = true;
  registry.push_back(t);
  return t;
}

}  // namespace tdcndetail

struct TcnBlockParams {
  ad::Tensor expand_w, expand_b;      // 1x1, B -> H
  ad::Tensor slope1;                  // PReLU
  ad::Tensor norm1_g, norm1_b;       // gLN over H
  ad::Tensor depth_w, depth_b;        // depthwise, kernel P, dilation d
  ad::Tensor slope2;
  ad::Tensor norm2_g, norm2_b;
  ad::Tensor project_w, project_b;    // 1x1, H -> B
};

struct TdcnParams {
  TdcnConfig cfg;
  ad::Tensor encoder_w, encoder_b;    // [N, Cin, L]
  ad::Tensor enc_norm_g, enc_norm_b;  // gLN over N
  ad::Tensor bottleneck_w, bottleneck_b;  // 1x1, N -> B
  std::vector<TcnBlockParams> blocks;     // R*X, dilation 2^x within each repeat
  ad::Tensor mask_slope;              // PReLU before the mask head
  ad::Tensor mask_w, mask_b;          // 1x1, B -> heads*N
  ad::Tensor decoder_w;               // [N, 1, L], shared across heads
  std::vector<ad::Tensor> all;        // flat view in construction order

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const auto& t : all) n += t.size();
    return n;
  }
};

inline TdcnParams make_tdcn(const TdcnConfig& cfg, Rng& rng) {
  cfg.validate();
  using namespace tdcndetail;
  TdcnParams p;
  p.cfg = cfg;
  auto& reg = p.all;
  const int N = cfg.basis, L = cfg.kernel, B = cfg.bottleneck, H = cfg.hidden;
  p.encoder_w = init_tensor({N, cfg.in_channels, L}, cfg.in_channels * L, rng, reg);
  p.encoder_b = const_tensor({N}, 0.0, reg);
  p.enc_norm_g = const_tensor({N}, 1.0, reg);
  p.enc_norm_b = const_tensor({N}, 0.0, reg);
  p.bottleneck_w = init_tensor({B, N, 1}, N, rng, reg);
  p.bottleneck_b = const_tensor({B}, 0.0, reg);
  for (int r = 0; r < cfg.repeats; ++r) {
    for (int x = 0; x < cfg.blocks_per_repeat; ++x) {
      TcnBlockParams b;
      b.expand_w = init_tensor({H, B, 1}, B, rng, reg);
      b.expand_b = const_tensor({H}, 0.0, reg);
      b.slope1 = const_tensor({1}, 0.25, reg);
      b.norm1_g = const_tensor({H}, 1.0, reg);
      b.norm1_b = const_tensor({H}, 0.0, reg);
      b.depth_w = init_tensor({H, 1, cfg.conv_kernel}, cfg.conv_kernel, rng, reg);
      b.depth_b = const_tensor({H}, 0.0, reg);
      b.slope2 = const_tensor({1}, 0.25, reg);
      b.norm2_g = const_tensor({H}, 1.0, reg);
      b.norm2_b = const_tensor({H}, 0.0, reg);
      b.project_w = init_tensor({B, H, 1}, H, rng, reg);
      b.project_b = const_tensor({B}, 0.0, reg);
      p.blocks.push_back(std::move(b));
    }
  }
  p.mask_slope = const_tensor({1}, 0.25, reg);
  p.mask_w = init_tensor({cfg.heads * N, B, 1}, B, rng, reg);
  p.mask_b = const_tensor({cfg.heads * N}, 0.0, reg);
  p.decoder_w = init_tensor({N, 1, L}, N, rng, reg);
  return p;
}

// input [Cin, T] -> one [1, T] waveform per head.
inline std::vector<ad::Tensor> tdcn_forward(const TdcnParams& p, const ad::Tensor& input) {
  const auto& cfg = p.cfg;
  const auto& shp = input.shape();
  if (shp.size() != 2 || shp[0] != cfg.in_channels)
    throw std::invalid_argument("tdcn_forward: input channel count mismatch");
  const std::int64_t T = shp[1];
  const int stride = cfg.kernel / 2;

  // Encoder: padding = stride keeps every sample covered and lets the decoder
  // mirror the geometry exactly so outputs align with the input.
  auto feats = ad::relu(ad::conv1d(input, p.encoder_w, p.encoder_b,
                                   {stride, 1, stride, 1}));  // [N, K]
  auto h = ad::global_layer_norm(feats, p.enc_norm_g, p.enc_norm_b);
  h = ad::conv1d(h, p.bottleneck_w, p.bottleneck_b);  // [B, K]

  for (int r = 0; r < cfg.repeats; ++r) {
    for (int x = 0; x < cfg.blocks_per_repeat; ++x) {
      const auto& b = p.blocks[static_cast<std::size_t>(r * cfg.blocks_per_repeat + x)];
      const int dil = 1 << x;
      auto z = ad::conv1d(h, b.expand_w, b.expand_b);
      z = ad::global_layer_norm(ad::prelu(z, b.slope1), b.norm1_g, b.norm1_b);
      z = ad::conv1d(z, b.depth_w, b.depth_b,
                     {1, dil, dil * (cfg.conv_kernel - 1) / 2, cfg.hidden});
      z = ad::global_layer_norm(ad::prelu(z, b.slope2), b.norm2_g, b.norm2_b);
      z = ad::conv1d(z, b.project_w, b.project_b);
      h = ad::add(h, z);
    }
  }

  auto mask_in = ad::prelu(h, p.mask_slope);
  auto masks = ad::relu(ad::conv1d(mask_in, p.mask_w, p.mask_b));  // [heads*N, K]

  std::vector<ad::Tensor> outs;
  outs.reserve(static_cast<std::size_t>(cfg.heads));
  for (int i = 0; i < cfg.heads; ++i) {
    auto m = ad::slice0(masks, static_cast<std::int64_t>(i) * cfg.basis, cfg.basis);
    auto coded = ad::mul(m, feats);
    outs.push_back(ad::conv_transpose1d(coded, p.decoder_w, stride, T, stride));
  }
  return outs;
}

inline ad::Tensor vme_forward(const TdcnParams& p, const ad::Tensor& rm_waves) {
  if (p.cfg.heads != 1) throw std::invalid_argument("vme_forward: model must have one head");
  return tdcn_forward(p, rm_waves)[0];
}

inline std::vector<ad::Tensor> separator_forward(const TdcnParams& p, const ad::Tensor& mixture) {
  if (p.cfg.in_channels != 1)
    throw std::invalid_argument("separator_forward: model must take a single channel");
  return tdcn_forward(p, mixture);
}

}  // namespace nnvme
