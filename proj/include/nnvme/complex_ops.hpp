#pragma once

// Differentiable spectral and complex-matrix primitives. Complex tensors are
// real tensors with a trailing [re, im] dimension. Backward rules for the
// linear ops are their adjoints; matrix inverse uses d(A^-1) = -A^-1 dA A^-1.

#include <complex>

#include "nnvme/autodiff.hpp"
#include "nnvme/stft.hpp"

namespace nnvme::ad {

using cd = std::complex<double>;

namespace cdetail {

inline cd load(const double* p) { return {p[0], p[1]}; }
inline void store(double* p, cd z) {
  p[0] = z.real();
  p[1] = z.imag();
}
inline void accum(double* p, cd z) {
  p[0] += z.real();
  p[1] += z.imag();
}

// Gauss-Jordan inverse with partial pivoting, column-major-free small C.
inline void invert(const cd* a, cd* out, int C) {
  std::vector<cd> m(a, a + C * C);
  std::vector<cd> inv(C * C, cd{0.0, 0.0});
  for (int i = 0; i < C; ++i) inv[i * C + i] = 1.0;
  for (int col = 0; col < C; ++col) {
    int piv = col;
    for (int r = col + 1; r < C; ++r)
      if (std::abs(m[r * C + col]) > std::abs(m[piv * C + col])) piv = r;
    if (std::abs(m[piv * C + col]) < 1e-300)
      throw std::domain_error("complex inverse: singular matrix");
    if (piv != col)
      for (int c = 0; c < C; ++c) {
        std::swap(m[piv * C + c], m[col * C + c]);
        std::swap(inv[piv * C + c], inv[col * C + c]);
      }
    const cd d = 1.0 / m[col * C + col];
    for (int c = 0; c < C; ++c) {
      m[col * C + c] *= d;
      inv[col * C + c] *= d;
    }
    for (int r = 0; r < C; ++r) {
      if (r == col) continue;
      const cd f = m[r * C + col];
      if (f == cd{0.0, 0.0}) continue;
      for (int c = 0; c < C; ++c) {
        m[r * C + c] -= f * m[col * C + c];
        inv[r * C + c] -= f * inv[col * C + c];
      }
    }
  }
  std::copy(inv.begin(), inv.end(), out);
}

}  // namespace cdetail

// ---- STFT / iSTFT as differentiable maps on single channels ----

// x: [T] real -> [frames, bins, 2]
inline Tensor stft_t(const Tensor& x, const StftConfig& cfg) {
  cfg.validate();
  if (x.shape().size() != 1) throw std::invalid_argument("stft_t: expected [T]");
  const std::int64_t T = x.shape()[0];
  if (T < cfg.frame_length) throw std::invalid_argument("stft_t: signal too short");
  const auto win = nnvme::detail::make_window(cfg);
  const std::int64_t pad = cfg.frame_length - cfg.hop;
  const std::int64_t frames = stft_num_frames(T, cfg);
  const int N = cfg.frame_length, F = cfg.bins();

  auto n = detail::make_node({frames, F, 2}, {x.shared()});
  const double* xv = x.value().data();
  std::vector<double> buf(N);
  std::vector<cd> bins(F);
  for (std::int64_t t = 0; t < frames; ++t) {
    const std::int64_t start = t * cfg.hop - pad;
    for (int m = 0; m < N; ++m) {
      const std::int64_t idx = start + m;
      buf[m] = (idx >= 0 && idx < T) ? xv[idx] * win[m] : 0.0;
    }
    nnvme::detail::rfft(buf.data(), static_cast<std::size_t>(N), bins.data());
    for (int f = 0; f < F; ++f) cdetail::store(&n->value[(t * F + f) * 2], bins[f]);
  }

  if (n->requires_grad) {
    n->backward_fn = [=](Node& self) {
      Node* p = self.parents[0].get();
      // adjoint: g_x[start+m] += win[m] * Re{ sum_f G(f) e^{+i 2pi f m / N} }
      std::vector<cd> a(static_cast<std::size_t>(N));
      for (std::int64_t t = 0; t < frames; ++t) {
        std::fill(a.begin(), a.end(), cd{0.0, 0.0});
        for (int f = 0; f < F; ++f) a[f] = cdetail::load(&self.grad[(t * F + f) * 2]);
        nnvme::detail::fft_inplace(a, +1);
        const std::int64_t start = t * cfg.hop - pad;
        for (int m = 0; m < N; ++m) {
          const std::int64_t idx = start + m;
          if (idx >= 0 && idx < T) p->grad[idx] += win[m] * a[m].real();
        }
      }
    };
  }
  return Tensor(n);
}

// X: [frames, bins, 2] -> [out_len] real, weighted overlap-add synthesis.
inline Tensor istft_t(const Tensor& X, const StftConfig& cfg, std::int64_t out_len) {
  cfg.validate();
  const auto& shp = X.shape();
  if (shp.size() != 3 || shp[1] != cfg.bins() || shp[2] != 2)
    throw std::invalid_argument("istft_t: expected [frames, bins, 2]");
  const auto win = nnvme::detail::make_window(cfg);
  const auto norm = nnvme::detail::cola_normalizer(cfg, win);
  const std::int64_t frames = shp[0];
  const int N = cfg.frame_length, F = cfg.bins();
  const std::int64_t pad = cfg.frame_length - cfg.hop;
  const std::int64_t padded = (frames - 1) * cfg.hop + N;

  auto n = detail::make_node({out_len}, {X.shared()});
  std::vector<double> acc(static_cast<std::size_t>(padded), 0.0);
  std::vector<double> frame(N);
  for (std::int64_t t = 0; t < frames; ++t) {
    std::vector<cd> bins(F);
    for (int f = 0; f < F; ++f) bins[f] = cdetail::load(&X.value()[(t * F + f) * 2]);
    nnvme::detail::irfft(bins.data(), static_cast<std::size_t>(N), frame.data());
    const std::int64_t start = t * cfg.hop;
    for (int m = 0; m < N; ++m) acc[start + m] += frame[m] * win[m];
  }
  for (std::int64_t i = 0; i < out_len; ++i) {
    const std::int64_t p = i + pad;
    n->value[i] = (p < padded) ? acc[p] / norm[p % cfg.hop] : 0.0;
  }

  if (n->requires_grad) {
    n->backward_fn = [=](Node& self) {
      Node* p = self.parents[0].get();
      // g_acc[q] = g_out[q - pad] / norm;  per frame gX = (c_f / N) rfft(win * g_acc)
      std::vector<double> gacc(static_cast<std::size_t>(padded), 0.0);
      for (std::int64_t i = 0; i < out_len; ++i) {
        const std::int64_t q = i + pad;
        if (q < padded) gacc[q] = self.grad[i] / norm[q % cfg.hop];
      }
      std::vector<double> gframe(N);
      std::vector<cd> bins(F);
      for (std::int64_t t = 0; t < frames; ++t) {
        const std::int64_t start = t * cfg.hop;
        for (int m = 0; m < N; ++m) gframe[m] = gacc[start + m] * win[m];
        nnvme::detail::rfft(gframe.data(), static_cast<std::size_t>(N), bins.data());
        for (int f = 0; f < F; ++f) {
          const double cf = (f == 0 || f == N / 2) ? 1.0 : 2.0;
          cdetail::accum(&p->grad[(t * F + f) * 2], bins[f] * (cf / N));
        }
      }
    };
  }
  return Tensor(n);
}

// ---- masked spatial covariance ----

// specs: one [frames, bins, 2] tensor per channel; mask: constant [frames, bins]
// weights (not differentiated). Output [bins, C, C, 2] with
// Phi(f) = sum_t m(t,f) y y^H / sum_t m(t,f); all-zero mask columns fall back
// to the unmasked average (flag reported via fallback_bins when non-null).
inline Tensor masked_scm(const std::vector<Tensor>& specs, const std::vector<double>& mask,
                         std::vector<int>* fallback_bins = nullptr) {
  if (specs.empty()) throw std::invalid_argument("masked_scm: no channels");
  const auto shp = specs[0].shape();
  if (shp.size() != 3 || shp[2] != 2)
    throw std::invalid_argument("masked_scm: expected [frames, bins, 2]");
  const std::int64_t Tf = shp[0], F = shp[1];
  const int C = static_cast<int>(specs.size());
  if (static_cast<std::int64_t>(mask.size()) != Tf * F)
    throw std::invalid_argument("masked_scm: mask shape mismatch");
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& s : specs) {
    if (s.shape() != shp) throw std::invalid_argument("masked_scm: channel shape mismatch");
    parents.push_back(s.shared());
  }
  auto n = detail::make_node({F, C, C, 2}, std::move(parents));

  // normalized per (t, f) weights, with unmasked fallback per bin
  auto wts = std::make_shared<std::vector<double>>(static_cast<std::size_t>(Tf * F));
  for (std::int64_t f = 0; f < F; ++f) {
    double msum = 0.0;
    for (std::int64_t t = 0; t < Tf; ++t) msum += mask[t * F + f];
    if (msum > 1e-12) {
      for (std::int64_t t = 0; t < Tf; ++t) (*wts)[t * F + f] = mask[t * F + f] / msum;
    } else {
      if (fallback_bins) fallback_bins->push_back(static_cast<int>(f));
      for (std::int64_t t = 0; t < Tf; ++t) (*wts)[t * F + f] = 1.0 / static_cast<double>(Tf);
    }
  }

  std::vector<const double*> ys(C);
  for (int c = 0; c < C; ++c) ys[c] = specs[c].value().data();
  std::fill(n->value.begin(), n->value.end(), 0.0);
  for (std::int64_t t = 0; t < Tf; ++t) {
    for (std::int64_t f = 0; f < F; ++f) {
      const double w = (*wts)[t * F + f];
      if (w == 0.0) continue;
      for (int a = 0; a < C; ++a) {
        const cd ya = cdetail::load(ys[a] + (t * F + f) * 2);
        for (int b = 0; b < C; ++b) {
          const cd yb = cdetail::load(ys[b] + (t * F + f) * 2);
          cdetail::accum(&n->value[((f * C + a) * C + b) * 2], w * ya * std::conj(yb));
        }
      }
    }
  }

  if (n->requires_grad) {
    std::vector<std::vector<double>> vals;
    for (int c = 0; c < C; ++c) vals.push_back(specs[c].value());
    auto vy = std::make_shared<std::vector<std::vector<double>>>(std::move(vals));
    n->backward_fn = [=](Node& self) {
      // g_y(t,f) = w(t,f) * (G(f) + G(f)^H) y(t,f)
      std::vector<cd> B(static_cast<std::size_t>(F * C * C));
      for (std::int64_t f = 0; f < F; ++f)
        for (int a = 0; a < C; ++a)
          for (int b = 0; b < C; ++b) {
            const cd g = cdetail::load(&self.grad[((f * C + a) * C + b) * 2]);
            const cd gh = cdetail::load(&self.grad[((f * C + b) * C + a) * 2]);
            B[(f * C + a) * C + b] = g + std::conj(gh);
          }
      for (int a = 0; a < C; ++a) {
        Node* p = self.parents[a].get();
        if (!p->requires_grad) continue;
        for (std::int64_t t = 0; t < Tf; ++t)
          for (std::int64_t f = 0; f < F; ++f) {
            const double w = (*wts)[t * F + f];
            if (w == 0.0) continue;
            cd acc{0.0, 0.0};
            for (int b = 0; b < C; ++b)
              acc += B[(f * C + a) * C + b] *
                     cdetail::load((*vy)[b].data() + (t * F + f) * 2);
            cdetail::accum(&p->grad[(t * F + f) * 2], w * acc);
          }
      }
    };
  }
  return Tensor(n);
}

// ---- batched complex matrix ops on [F, C, C, 2] ----

inline Tensor cmatmul(const Tensor& A, const Tensor& B) {
  detail::check_same_shape(A, B, "cmatmul");
  const auto& shp = A.shape();
  const std::int64_t F = shp[0], C = shp[1];
  auto n = detail::make_node(shp, {A.shared(), B.shared()});
  auto idx = [C](std::int64_t f, int a, int b) { return ((f * C + a) * C + b) * 2; };
  const double* av = A.value().data();
  const double* bv = B.value().data();
  for (std::int64_t f = 0; f < F; ++f)
    for (int a = 0; a < C; ++a)
      for (int b = 0; b < C; ++b) {
        cd acc{0.0, 0.0};
        for (int k = 0; k < C; ++k)
          acc += cdetail::load(av + idx(f, a, k)) * cdetail::load(bv + idx(f, k, b));
        cdetail::store(&n->value[idx(f, a, b)], acc);
      }
  if (n->requires_grad) {
    auto va = std::make_shared<std::vector<double>>(A.value());
    auto vb = std::make_shared<std::vector<double>>(B.value());
    n->backward_fn = [=](Node& self) {
      Node* pa = self.parents[0].get();
      Node* pb = self.parents[1].get();
      for (std::int64_t f = 0; f < F; ++f)
        for (int a = 0; a < C; ++a)
          for (int b = 0; b < C; ++b) {
            const cd g = cdetail::load(&self.grad[idx(f, a, b)]);
            if (g == cd{0.0, 0.0}) continue;
            for (int k = 0; k < C; ++k) {
              if (pa->requires_grad)  // gA = g B^H
                cdetail::accum(&pa->grad[idx(f, a, k)],
                               g * std::conj(cdetail::load(vb->data() + idx(f, k, b))));
              if (pb->requires_grad)  // gB = A^H g
                cdetail::accum(&pb->grad[idx(f, k, b)],
                               std::conj(cdetail::load(va->data() + idx(f, a, k))) * g);
            }
          }
    };
  }
  return Tensor(n);
}

inline Tensor cinverse(const Tensor& A) {
  const auto& shp = A.shape();
  if (shp.size() != 4 || shp[1] != shp[2] || shp[3] != 2)
    throw std::invalid_argument("cinverse: expected [F, C, C, 2]");
  const std::int64_t F = shp[0];
  const int C = static_cast<int>(shp[1]);
  auto n = detail::make_node(shp, {A.shared()});
  std::vector<cd> a(C * C), inv(C * C);
  for (std::int64_t f = 0; f < F; ++f) {
    for (int i = 0; i < C * C; ++i) a[i] = cdetail::load(&A.value()[(f * C * C + i) * 2]);
    cdetail::invert(a.data(), inv.data(), C);
    for (int i = 0; i < C * C; ++i) cdetail::store(&n->value[(f * C * C + i) * 2], inv[i]);
  }
  if (n->requires_grad) {
    auto vinv = std::make_shared<std::vector<double>>(n->value);
    n->backward_fn = [=](Node& self) {
      Node* p = self.parents[0].get();
      // gA = -B^H G B^H with B = A^-1
      std::vector<cd> B(C * C), G(C * C), t1(C * C);
      for (std::int64_t f = 0; f < F; ++f) {
        for (int i = 0; i < C * C; ++i) {
          B[i] = cdetail::load(vinv->data() + (f * C * C + i) * 2);
          G[i] = cdetail::load(&self.grad[(f * C * C + i) * 2]);
        }
        // t1 = B^H G
        for (int i = 0; i < C; ++i)
          for (int j = 0; j < C; ++j) {
            cd acc{0.0, 0.0};
            for (int k = 0; k < C; ++k) acc += std::conj(B[k * C + i]) * G[k * C + j];
            t1[i * C + j] = acc;
          }
        // gA = -t1 B^H
        for (int i = 0; i < C; ++i)
          for (int j = 0; j < C; ++j) {
            cd acc{0.0, 0.0};
            for (int k = 0; k < C; ++k) acc += t1[i * C + k] * std::conj(B[j * C + k]);
            cdetail::accum(&p->grad[((f * C + i) * C + j) * 2], -acc);
          }
      }
    };
  }
  return Tensor(n);
}

// A + (delta / C) tr(A) I, relative diagonal loading.
inline Tensor diag_load(const Tensor& A, double delta) {
  const auto& shp = A.shape();
  const std::int64_t F = shp[0];
  const int C = static_cast<int>(shp[1]);
  auto n = detail::make_node(shp, {A.shared()});
  n->value = A.value();
  const double scale = delta / C;
  for (std::int64_t f = 0; f < F; ++f) {
    cd tr{0.0, 0.0};
    for (int c = 0; c < C; ++c) tr += cdetail::load(&A.value()[((f * C + c) * C + c) * 2]);
    for (int c = 0; c < C; ++c)
      cdetail::accum(&n->value[((f * C + c) * C + c) * 2], scale * tr);
  }
  if (n->requires_grad)
    n->backward_fn = [=](Node& self) {
      Node* p = self.parents[0].get();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      for (std::int64_t f = 0; f < F; ++f) {
        cd trg{0.0, 0.0};
        for (int c = 0; c < C; ++c)
          trg += cdetail::load(&self.grad[((f * C + c) * C + c) * 2]);
        for (int c = 0; c < C; ++c)
          cdetail::accum(&p->grad[((f * C + c) * C + c) * 2], scale * trg);
      }
    };
  return Tensor(n);
}

// trace over [F, C, C, 2] -> [F, 2]
inline Tensor ctrace(const Tensor& A) {
  const auto& shp = A.shape();
  const std::int64_t F = shp[0];
  const int C = static_cast<int>(shp[1]);
  auto n = detail::make_node({F, 2}, {A.shared()});
  for (std::int64_t f = 0; f < F; ++f) {
    cd tr{0.0, 0.0};
    for (int c = 0; c < C; ++c) tr += cdetail::load(&A.value()[((f * C + c) * C + c) * 2]);
    cdetail::store(&n->value[f * 2], tr);
  }
  if (n->requires_grad)
    n->backward_fn = [=](Node& self) {
      Node* p = self.parents[0].get();
      for (std::int64_t f = 0; f < F; ++f) {
        const cd g = cdetail::load(&self.grad[f * 2]);
        for (int c = 0; c < C; ++c) cdetail::accum(&p->grad[((f * C + c) * C + c) * 2], g);
      }
    };
  return Tensor(n);
}

// column col of each [C, C] matrix -> [F, C, 2]
inline Tensor cselect_col(const Tensor& A, int col) {
  const auto& shp = A.shape();
  const std::int64_t F = shp[0];
  const int C = static_cast<int>(shp[1]);
  if (col < 0 || col >= C) throw std::invalid_argument("cselect_col: bad column");
  auto n = detail::make_node({F, C, 2}, {A.shared()});
  for (std::int64_t f = 0; f < F; ++f)
    for (int c = 0; c < C; ++c) {
      n->value[(f * C + c) * 2] = A.value()[((f * C + c) * C + col) * 2];
      n->value[(f * C + c) * 2 + 1] = A.value()[((f * C + c) * C + col) * 2 + 1];
    }
  if (n->requires_grad)
    n->backward_fn = [=](Node& self) {
      Node* p = self.parents[0].get();
      for (std::int64_t f = 0; f < F; ++f)
        for (int c = 0; c < C; ++c) {
          p->grad[((f * C + c) * C + col) * 2] += self.grad[(f * C + c) * 2];
          p->grad[((f * C + c) * C + col) * 2 + 1] += self.grad[(f * C + c) * 2 + 1];
        }
    };
  return Tensor(n);
}

// num [F, C, 2] / den [F, 2], complex division broadcast over C. Bins whose
// denominator magnitude is <= min_den_abs emit zeros (zero gradient) and are
// reported through `degenerate` when non-null.
inline Tensor cdiv_bcast(const Tensor& num, const Tensor& den, double min_den_abs = 0.0,
                         std::vector<int>* degenerate = nullptr) {
  const auto& shp = num.shape();
  const std::int64_t F = shp[0], C = shp[1];
  if (den.shape() != Shape{F, 2}) throw std::invalid_argument("cdiv_bcast: shape mismatch");
  auto n = detail::make_node(shp, {num.shared(), den.shared()});
  auto dead = std::make_shared<std::vector<char>>(static_cast<std::size_t>(F), 0);
  if (degenerate) degenerate->clear();
  for (std::int64_t f = 0; f < F; ++f) {
    const cd d = cdetail::load(&den.value()[f * 2]);
    if (std::abs(d) <= min_den_abs) {
      (*dead)[static_cast<std::size_t>(f)] = 1;
      if (degenerate) degenerate->push_back(static_cast<int>(f));
      for (std::int64_t c = 0; c < C; ++c) cdetail::store(&n->value[(f * C + c) * 2], {0.0, 0.0});
      continue;
    }
    for (std::int64_t c = 0; c < C; ++c)
      cdetail::store(&n->value[(f * C + c) * 2],
                     cdetail::load(&num.value()[(f * C + c) * 2]) / d);
  }
  if (n->requires_grad) {
    auto vn = std::make_shared<std::vector<double>>(num.value());
    auto vd = std::make_shared<std::vector<double>>(den.value());
    n->backward_fn = [=](Node& self) {
      Node* pn = self.parents[0].get();
      Node* pd = self.parents[1].get();
      for (std::int64_t f = 0; f < F; ++f) {
        if ((*dead)[static_cast<std::size_t>(f)]) continue;
        const cd d = cdetail::load(vd->data() + f * 2);
        const cd invc = std::conj(1.0 / d);
        cd gd{0.0, 0.0};
        for (std::int64_t c = 0; c < C; ++c) {
          const cd g = cdetail::load(&self.grad[(f * C + c) * 2]);
          if (pn->requires_grad) cdetail::accum(&pn->grad[(f * C + c) * 2], g * invc);
          const cd numv = cdetail::load(vn->data() + (f * C + c) * 2);
          gd += g * std::conj(-numv / (d * d));
        }
        if (pd->requires_grad) cdetail::accum(&pd->grad[f * 2], gd);
      }
    };
  }
  return Tensor(n);
}

// Beamform: X(t,f) = sum_c conj(w_c(f)) Y_c(t,f); w [F, C, 2], Y_c [frames, F, 2].
inline Tensor bf_apply(const Tensor& w, const std::vector<Tensor>& specs) {
  const auto& wshp = w.shape();
  const std::int64_t F = wshp[0];
  const int C = static_cast<int>(wshp[1]);
  if (static_cast<int>(specs.size()) != C)
    throw std::invalid_argument("bf_apply: channel count mismatch");
  const auto sshp = specs[0].shape();
  if (sshp.size() != 3 || sshp[1] != F || sshp[2] != 2)
    throw std::invalid_argument("bf_apply: spec shape mismatch");
  const std::int64_t Tf = sshp[0];

  std::vector<std::shared_ptr<Node>> parents{w.shared()};
  for (const auto& s : specs) parents.push_back(s.shared());
  auto n = detail::make_node({Tf, F, 2}, std::move(parents));
  std::fill(n->value.begin(), n->value.end(), 0.0);
  for (int c = 0; c < C; ++c) {
    const double* y = specs[c].value().data();
    for (std::int64_t f = 0; f < F; ++f) {
      const cd wc = std::conj(cdetail::load(&w.value()[(f * C + c) * 2]));
      for (std::int64_t t = 0; t < Tf; ++t)
        cdetail::accum(&n->value[(t * F + f) * 2], wc * cdetail::load(y + (t * F + f) * 2));
    }
  }

  if (n->requires_grad) {
    auto vw = std::make_shared<std::vector<double>>(w.value());
    std::vector<std::vector<double>> vals;
    for (int c = 0; c < C; ++c) vals.push_back(specs[c].value());
    auto vy = std::make_shared<std::vector<std::vector<double>>>(std::move(vals));
    n->backward_fn = [=](Node& self) {
      Node* pw = self.parents[0].get();
      for (int c = 0; c < C; ++c) {
        Node* py = self.parents[1 + c].get();
        for (std::int64_t f = 0; f < F; ++f) {
          const cd wc = cdetail::load(vw->data() + (f * C + c) * 2);
          cd gw{0.0, 0.0};
          for (std::int64_t t = 0; t < Tf; ++t) {
            const cd g = cdetail::load(&self.grad[(t * F + f) * 2]);
            const cd yv = cdetail::load((*vy)[c].data() + (t * F + f) * 2);
            // X = conj(w) y: g_w = conj(g) y, g_y = g w
            // (gradients in the dL/dre + i dL/dim convention)
            gw += std::conj(g) * yv;
            if (py->requires_grad) cdetail::accum(&py->grad[(t * F + f) * 2], g * wc);
          }
          if (pw->requires_grad) cdetail::accum(&pw->grad[(f * C + c) * 2], gw);
        }
      }
    };
  }
  return Tensor(n);
}

}  // namespace nnvme::ad
