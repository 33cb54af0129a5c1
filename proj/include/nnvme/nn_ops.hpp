#pragma once

// Differentiable building blocks for the time-domain conv networks.
// Tensors are laid out [channels, time] row-major.

#include "nnvme/autodiff.hpp"

namespace nnvme::ad {

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
  int groups = 1;
};

// input [Cin, T], weight [Cout, Cin/groups, K], bias [Cout] (optional).
inline Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                     ConvSpec spec = {}) {
  const auto& ishp = input.shape();
  const auto& wshp = weight.shape();
  if (ishp.size() != 2 || wshp.size() != 3)
    throw std::invalid_argument("conv1d: expected input [C,T], weight [Co,Ci,K]");
  const std::int64_t cin = ishp[0], T = ishp[1];
  const std::int64_t cout = wshp[0], cin_g = wshp[1], K = wshp[2];
  const int G = spec.groups;
  if (cin % G != 0 || cout % G != 0 || cin_g != cin / G)
    throw std::invalid_argument("conv1d: channel/group mismatch");
  const std::int64_t span = spec.dilation * (K - 1) + 1;
  const std::int64_t tout = (T + 2 * spec.padding - span) / spec.stride + 1;
  if (tout <= 0) throw std::invalid_argument("conv1d: output length <= 0");

  std::vector<std::shared_ptr<Node>> parents{input.shared(), weight.shared()};
  if (bias.defined()) parents.push_back(bias.shared());
  auto n = detail::make_node({cout, tout}, std::move(parents));

  const double* x = input.value().data();
  const double* w = weight.value().data();
  double* y = n->value.data();
  const std::int64_t co_per_g = cout / G;
  for (std::int64_t co = 0; co < cout; ++co) {
    const std::int64_t g = co / co_per_g;
    double* yrow = y + co * tout;
    const double b = bias.defined() ? bias.value()[co] : 0.0;
    for (std::int64_t t = 0; t < tout; ++t) yrow[t] = b;
    for (std::int64_t ci = 0; ci < cin_g; ++ci) {
      const double* xrow = x + (g * cin_g + ci) * T;
      const double* wrow = w + (co * cin_g + ci) * K;
      for (std::int64_t k = 0; k < K; ++k) {
        const double wk = wrow[k];
        if (wk == 0.0) continue;
        const std::int64_t off = k * spec.dilation - spec.padding;
        for (std::int64_t t = 0; t < tout; ++t) {
          const std::int64_t ti = t * spec.stride + off;
          if (ti >= 0 && ti < T) yrow[t] += wk * xrow[ti];
        }
      }
    }
  }

  if (n->requires_grad) {
    auto vx = std::make_shared<std::vector<double>>(input.value());
    auto vw = std::make_shared<std::vector<double>>(weight.value());
    const bool has_bias = bias.defined();
    n->backward_fn = [=](Node& self) {
      Node* pi = self.parents[0].get();
      Node* pw = self.parents[1].get();
      Node* pb = has_bias ? self.parents[2].get() : nullptr;
      const double* gy = self.grad.data();
      for (std::int64_t co = 0; co < cout; ++co) {
        const std::int64_t g = co / co_per_g;
        const double* gyrow = gy + co * tout;
        if (pb && pb->requires_grad) {
          double acc = 0.0;
          for (std::int64_t t = 0; t < tout; ++t) acc += gyrow[t];
          pb->grad[co] += acc;
        }
        for (std::int64_t ci = 0; ci < cin_g; ++ci) {
          const std::int64_t xbase = (g * cin_g + ci) * T;
          const std::int64_t wbase = (co * cin_g + ci) * K;
          for (std::int64_t k = 0; k < K; ++k) {
            const std::int64_t off = k * spec.dilation - spec.padding;
            if (pw->requires_grad) {
              double acc = 0.0;
              for (std::int64_t t = 0; t < tout; ++t) {
                const std::int64_t ti = t * spec.stride + off;
                if (ti >= 0 && ti < T) acc += gyrow[t] * (*vx)[xbase + ti];
              }
              pw->grad[wbase + k] += acc;
            }
            if (pi->requires_grad) {
              const double wk = (*vw)[wbase + k];
              for (std::int64_t t = 0; t < tout; ++t) {
                const std::int64_t ti = t * spec.stride + off;
                if (ti >= 0 && ti < T) pi->grad[xbase + ti] += gyrow[t] * wk;
              }
            }
          }
        }
      }
    };
  }
  return Tensor(n);
}

// input [Cin, T], weight [Cin, Cout, K]; output [Cout, out_len] where frames are
// overlap-added at stride spacing and the result trimmed/padded to out_len.
// `padding` shifts frame t to start at t*stride - padding, mirroring conv1d's
// symmetric padding so an encoder/decoder pair stays time-aligned.
inline Tensor conv_transpose1d(const Tensor& input, const Tensor& weight, int stride,
                               std::int64_t out_len, int padding = 0) {
  const auto& ishp = input.shape();
  const auto& wshp = weight.shape();
  if (ishp.size() != 2 || wshp.size() != 3 || wshp[0] != ishp[0])
    throw std::invalid_argument("conv_transpose1d: shape mismatch");
  const std::int64_t cin = ishp[0], T = ishp[1];
  const std::int64_t cout = wshp[1], K = wshp[2];

  auto n = detail::make_node({cout, out_len}, {input.shared(), weight.shared()});
  std::fill(n->value.begin(), n->value.end(), 0.0);
  const double* x = input.value().data();
  const double* w = weight.value().data();
  double* y = n->value.data();
  for (std::int64_t ci = 0; ci < cin; ++ci) {
    const double* xrow = x + ci * T;
    for (std::int64_t co = 0; co < cout; ++co) {
      const double* wrow = w + (ci * cout + co) * K;
      double* yrow = y + co * out_len;
      for (std::int64_t t = 0; t < T; ++t) {
        const double xv = xrow[t];
        if (xv == 0.0) continue;
        const std::int64_t base = t * stride - padding;
        for (std::int64_t k = 0; k < K; ++k) {
          const std::int64_t to = base + k;
          if (to >= 0 && to < out_len) yrow[to] += xv * wrow[k];
        }
      }
    }
  }

  if (n->requires_grad) {
    auto vx = std::make_shared<std::vector<double>>(input.value());
    auto vw = std::make_shared<std::vector<double>>(weight.value());
    n->backward_fn = [=](Node& self) {
      Node* pi = self.parents[0].get();
      Node* pw = self.parents[1].get();
      const double* gy = self.grad.data();
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        for (std::int64_t co = 0; co < cout; ++co) {
          const std::int64_t wbase = (ci * cout + co) * K;
          const double* gyrow = gy + co * out_len;
          for (std::int64_t t = 0; t < T; ++t) {
            const std::int64_t base = t * stride - padding;
            if (pi->requires_grad) {
              double acc = 0.0;
              for (std::int64_t k = 0; k < K; ++k) {
                const std::int64_t to = base + k;
                if (to >= 0 && to < out_len) acc += gyrow[to] * (*vw)[wbase + k];
              }
              pi->grad[ci * T + t] += acc;
            }
            if (pw->requires_grad) {
              const double xv = (*vx)[ci * T + t];
              if (xv != 0.0) {
                for (std::int64_t k = 0; k < K; ++k) {
                  const std::int64_t to = base + k;
                  if (to >= 0 && to < out_len) pw->grad[wbase + k] += gyrow[to] * xv;
                }
              }
            }
          }
        }
      }
    };
  }
  return Tensor(n);
}

// Global layer norm over the whole [C, T] tensor, per-channel affine.
inline Tensor global_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                double eps = 1e-8) {
  const auto& shp = x.shape();
  if (shp.size() != 2 || gamma.size() != shp[0] || beta.size() != shp[0])
    throw std::invalid_argument("global_layer_norm: shape mismatch");
  const std::int64_t C = shp[0], T = shp[1];
  const std::int64_t N = C * T;
  auto n = detail::make_node(shp, {x.shared(), gamma.shared(), beta.shared()});

  const double* xv = x.value().data();
  double mean = 0.0;
  for (std::int64_t i = 0; i < N; ++i) mean += xv[i];
  mean /= static_cast<double>(N);
  double var = 0.0;
  for (std::int64_t i = 0; i < N; ++i) {
    double d = xv[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(N);
  const double inv_std = 1.0 / std::sqrt(var + eps);

  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i) (*xhat)[i] = (xv[i] - mean) * inv_std;
  const double* gv = gamma.value().data();
  const double* bv = beta.value().data();
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t t = 0; t < T; ++t)
      n->value[c * T + t] = gv[c] * (*xhat)[c * T + t] + bv[c];

  if (n->requires_grad) {
    auto vg = std::make_shared<std::vector<double>>(gamma.value());
    n->backward_fn = [=](Node& self) {
      Node* px = self.parents[0].get();
      Node* pg = self.parents[1].get();
      Node* pb = self.parents[2].get();
      const double* g = self.grad.data();
      if (pg->requires_grad || pb->requires_grad) {
        for (std::int64_t c = 0; c < C; ++c) {
          double dg = 0.0, db = 0.0;
          for (std::int64_t t = 0; t < T; ++t) {
            dg += g[c * T + t] * (*xhat)[c * T + t];
            db += g[c * T + t];
          }
          if (pg->requires_grad) pg->grad[c] += dg;
          if (pb->requires_grad) pb->grad[c] += db;
        }
      }
      if (px->requires_grad) {
        // dxhat = g * gamma_c; dx = inv_std*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
        double m1 = 0.0, m2 = 0.0;
        std::vector<double> dxhat(static_cast<std::size_t>(N));
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t t = 0; t < T; ++t) {
            double d = g[c * T + t] * (*vg)[c];
            dxhat[c * T + t] = d;
            m1 += d;
            m2 += d * (*xhat)[c * T + t];
          }
        m1 /= static_cast<double>(N);
        m2 /= static_cast<double>(N);
        for (std::int64_t i = 0; i < N; ++i)
          px->grad[i] += inv_std * (dxhat[i] - m1 - (*xhat)[i] * m2);
      }
    };
  }
  return Tensor(n);
}

}  // namespace nnvme::ad
