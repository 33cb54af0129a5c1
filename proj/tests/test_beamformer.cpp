#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "fd_check.hpp"
#include "nnvme/beamformer.hpp"
#include "nnvme/losses.hpp"
#include "nnvme/metrics.hpp"
#include "nnvme/rng.hpp"

using namespace nnvme;
using cplx = std::complex<double>;

namespace {

// [F, C, C, 2] tensor from per-bin matrices.
ad::Tensor cov_tensor(const std::vector<std::vector<cplx>>& mats, int C) {
  const auto F = static_cast<std::int64_t>(mats.size());
  std::vector<double> data(static_cast<std::size_t>(F * C * C * 2));
  for (std::int64_t f = 0; f < F; ++f)
    for (int i = 0; i < C * C; ++i) {
      data[static_cast<std::size_t>((f * C * C + i) * 2)] = mats[static_cast<std::size_t>(f)][static_cast<std::size_t>(i)].real();
      data[static_cast<std::size_t>((f * C * C + i) * 2 + 1)] = mats[static_cast<std::size_t>(f)][static_cast<std::size_t>(i)].imag();
    }
  return ad::Tensor::leaf({F, C, C, 2}, std::move(data));
}

cplx weight_at(const ad::Tensor& w, std::int64_t f, int c, int C) {
  return {w.value()[static_cast<std::size_t>((f * C + c) * 2)],
          w.value()[static_cast<std::size_t>((f * C + c) * 2 + 1)]};
}

std::vector<cplx> random_vec(int C, Rng& rng) {
  std::vector<cplx> d(static_cast<std::size_t>(C));
  for (auto& v : d) v = {rng.normal(), rng.normal()};
  return d;
}

// A A^H + ridge*I: Hermitian positive definite.
std::vector<cplx> random_pd(int C, Rng& rng, double ridge = 0.1) {
  std::vector<cplx> a(static_cast<std::size_t>(C * C));
  for (auto& v : a) v = {rng.normal(), rng.normal()};
  std::vector<cplx> m(static_cast<std::size_t>(C * C), 0.0);
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) {
      cplx s = 0.0;
      for (int k = 0; k < C; ++k)
        s += a[static_cast<std::size_t>(i * C + k)] * std::conj(a[static_cast<std::size_t>(j * C + k)]);
      m[static_cast<std::size_t>(i * C + j)] = s + (i == j ? ridge : 0.0);
    }
  return m;
}

std::vector<cplx> outer(const std::vector<cplx>& d) {
  const int C = static_cast<int>(d.size());
  std::vector<cplx> m(static_cast<std::size_t>(C * C));
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j)
      m[static_cast<std::size_t>(i * C + j)] = d[static_cast<std::size_t>(i)] * std::conj(d[static_cast<std::size_t>(j)]);
  return m;
}

ad::Tensor random_spec(std::int64_t frames, int F, Rng& rng, bool requires_grad = false) {
  std::vector<double> d(static_cast<std::size_t>(frames * F * 2));
  for (auto& v : d) v = rng.normal();
  return ad::Tensor::leaf({frames, F, 2}, std::move(d), requires_grad);
}

Spectrogram make_spec(std::int64_t frames, int F) {
  StftConfig cfg;
  cfg.frame_length = 2 * (F - 1);
  cfg.hop = cfg.frame_length / 4;
  return Spectrogram(1, frames, cfg, 8000, frames * cfg.hop);
}

}  // namespace

TEST_CASE("magnitude ratio mask definition") {
  auto obs = make_spec(2, 9);
  auto sep = make_spec(2, 9);
  obs.at(0, 0, 0) = {2.0, 0.0};
  sep.at(0, 0, 0) = {0.0, 1.0};  // |sep| = 1, |obs| = 2
  obs.at(0, 1, 3) = {0.3, 0.4};
  sep.at(0, 1, 3) = {0.3, 0.4};  // equal -> mask ~ 1
  obs.at(0, 1, 5) = {0.0, 0.0};
  sep.at(0, 1, 5) = {5.0, 0.0};  // zero observation -> ceiling clamp

  auto masks = magnitude_ratio_masks(obs, {sep});
  REQUIRE(masks.size() == 1);
  const int F = obs.bins();
  CHECK(masks[0][0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(masks[0][static_cast<std::size_t>(1 * F + 3)] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(masks[0][static_cast<std::size_t>(1 * F + 5)] == 2.0);  // mask_ceiling
  for (double m : masks[0]) {
    CHECK(std::isfinite(m));
    CHECK(m >= 0.0);
    CHECK(m <= 2.0);
  }
}

TEST_CASE("mask shape mismatch is rejected") {
  auto obs = make_spec(2, 9);
  auto sep = make_spec(3, 9);
  CHECK_THROWS_AS(magnitude_ratio_masks(obs, {sep}), std::invalid_argument);
}

TEST_CASE("scm pair: single frame with unit mask gives y y^H; half masks coincide") {
  Rng rng(1);
  const int F = 3;
  std::vector<ad::Tensor> specs{random_spec(1, F, rng), random_spec(1, F, rng)};

  auto unit = estimate_scm(specs, std::vector<double>(F, 1.0));
  for (int f = 0; f < F; ++f) {
    cplx y0{specs[0].value()[static_cast<std::size_t>(f * 2)], specs[0].value()[static_cast<std::size_t>(f * 2 + 1)]};
    cplx y1{specs[1].value()[static_cast<std::size_t>(f * 2)], specs[1].value()[static_cast<std::size_t>(f * 2 + 1)]};
    const cplx expect01 = y0 * std::conj(y1);
    const std::size_t base = static_cast<std::size_t>((f * 4 + 1) * 2);  // element (0,1)
    CHECK(unit.phi_s.value()[base] == doctest::Approx(expect01.real()).epsilon(1e-12));
    CHECK(unit.phi_s.value()[base + 1] == doctest::Approx(expect01.imag()).epsilon(1e-12));
  }
  // complement of a unit mask is all-zero -> noise SCM falls back with flags
  CHECK(unit.fallback_s.empty());
  CHECK(unit.fallback_n.size() == F);

  auto half = estimate_scm(specs, std::vector<double>(F, 0.5));
  for (std::size_t i = 0; i < half.phi_s.value().size(); ++i)
    CHECK(half.phi_s.value()[i] == doctest::Approx(half.phi_n.value()[i]).epsilon(1e-12));
}

TEST_CASE("mvdr closed-form rank-1 point") {
  const int C = 2;
  std::vector<cplx> identity{1.0, 0.0, 0.0, 1.0};
  std::vector<cplx> dd = outer({1.0, 1.0});
  auto res = mvdr_souden(cov_tensor({dd}, C), cov_tensor({identity}, C));
  CHECK(res.degenerate_bins.empty());
  CHECK(weight_at(res.weights, 0, 0, C).real() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(weight_at(res.weights, 0, 1, C).real() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::abs(weight_at(res.weights, 0, 0, C).imag()) < 1e-12);
}

TEST_CASE("mvdr is distortionless for rank-1 sources") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int C = 2 + static_cast<int>(rng.next_u64() % 2);
    const int ref = static_cast<int>(rng.next_u64() % static_cast<unsigned>(C));
    auto d = random_vec(C, rng);
    const double sigma2 = std::exp(rng.normal());
    auto dd = outer(d);
    for (auto& v : dd) v *= sigma2;
    BfConfig cfg;
    cfg.ref_channel = ref;
    auto res = mvdr_souden(cov_tensor({dd}, C), cov_tensor({random_pd(C, rng)}, C), cfg);
    cplx whd = 0.0;
    for (int c = 0; c < C; ++c)
      whd += std::conj(weight_at(res.weights, 0, c, C)) * d[static_cast<std::size_t>(c)];
    CHECK(std::abs(whd - d[static_cast<std::size_t>(ref)]) < 1e-8);
  }
}

TEST_CASE("mvdr weights are invariant to source covariance scale") {
  Rng rng(3);
  const int C = 3;
  auto dd = outer(random_vec(C, rng));
  auto phi_n = cov_tensor({random_pd(C, rng)}, C);
  auto base = mvdr_souden(cov_tensor({dd}, C), phi_n);
  auto scaled_dd = dd;
  for (auto& v : scaled_dd) v *= 7.25;
  auto scaled = mvdr_souden(cov_tensor({scaled_dd}, C), phi_n);
  for (std::size_t i = 0; i < base.weights.value().size(); ++i)
    CHECK(std::abs(base.weights.value()[i] - scaled.weights.value()[i]) < 1e-12);
}

TEST_CASE("zero source covariance marks the bin degenerate with zero weights") {
  Rng rng(4);
  const int C = 2;
  std::vector<cplx> zero(4, 0.0);
  auto res = mvdr_souden(cov_tensor({zero, zero}, C), cov_tensor({random_pd(C, rng), random_pd(C, rng)}, C));
  CHECK(res.degenerate_bins == std::vector<int>{0, 1});
  for (double v : res.weights.value()) CHECK(v == 0.0);
}

TEST_CASE("one-hot weights select a channel exactly; zero weights give silence") {
  Rng rng(5);
  const int F = 3, C = 3;
  std::vector<ad::Tensor> specs;
  for (int c = 0; c < C; ++c) specs.push_back(random_spec(4, F, rng));
  for (int k = 0; k < C; ++k) {
    std::vector<double> wd(static_cast<std::size_t>(F * C * 2), 0.0);
    for (int f = 0; f < F; ++f) wd[static_cast<std::size_t>((f * C + k) * 2)] = 1.0;
    auto out = ad::bf_apply(ad::Tensor::leaf({F, C, 2}, std::move(wd)), specs);
    CHECK(out.value() == specs[static_cast<std::size_t>(k)].value());
  }
  auto silent = ad::bf_apply(ad::Tensor::zeros({F, C, 2}), specs);
  for (double v : silent.value()) CHECK(v == 0.0);
}

TEST_CASE("rank-1 noiseless source with known steering beamforms above 40 dB SDR") {
  Rng rng(6);
  StftConfig cfg;
  cfg.frame_length = 32;
  cfg.hop = 8;
  const int F = cfg.bins();
  const std::int64_t frames = 20;
  const std::int64_t T = frames * cfg.hop;

  // Y_c(t,f) = d_c(f) S(t,f): exact rank-1 per bin.
  std::vector<std::vector<cplx>> steering(static_cast<std::size_t>(F));
  for (auto& d : steering) d = random_vec(2, rng);
  auto S = random_spec(frames, F, rng);
  std::vector<ad::Tensor> specs;
  for (int c = 0; c < 2; ++c) {
    std::vector<double> d(static_cast<std::size_t>(frames * F * 2));
    for (std::int64_t t = 0; t < frames; ++t)
      for (int f = 0; f < F; ++f) {
        cplx s{S.value()[static_cast<std::size_t>((t * F + f) * 2)],
               S.value()[static_cast<std::size_t>((t * F + f) * 2 + 1)]};
        cplx y = steering[static_cast<std::size_t>(f)][static_cast<std::size_t>(c)] * s;
        d[static_cast<std::size_t>((t * F + f) * 2)] = y.real();
        d[static_cast<std::size_t>((t * F + f) * 2 + 1)] = y.imag();
      }
    specs.push_back(ad::Tensor::leaf({frames, F, 2}, std::move(d)));
  }

  auto scm = estimate_scm(specs, std::vector<double>(static_cast<std::size_t>(frames * F), 1.0));
  // complement mask is zero everywhere -> noise SCM falls back to the unmasked
  // average; swap in identity noise for a well-posed solve
  std::vector<std::vector<cplx>> eye(static_cast<std::size_t>(F),
                                     std::vector<cplx>{1.0, 0.0, 0.0, 1.0});
  auto res = mvdr_souden(scm.phi_s, cov_tensor(eye, 2));
  auto out = apply_bf(res.weights, specs, cfg, T);
  auto ref = ad::istft_t(specs[0], cfg, T);
  CHECK(sdr(ref.value(), out.value()) > 40.0);
}

TEST_CASE("channel provenance does not alter numerics") {
  // Feeding the same three spectrogram arrays as "3 real channels" or as
  // "2 real + 1 virtual" must hit the identical code path and bits.
  Rng rng(7);
  const int F = 5;
  std::vector<ad::Tensor> real3{random_spec(5, F, rng), random_spec(5, F, rng), random_spec(5, F, rng)};
  std::vector<ad::Tensor> augmented{real3[0],
                                    ad::Tensor::leaf(real3[1].shape(), real3[1].value()),
                                    real3[2]};
  std::vector<double> mask(static_cast<std::size_t>(5 * F));
  for (auto& m : mask) m = rng.uniform();
  auto a = estimate_scm(real3, mask);
  auto b = estimate_scm(augmented, mask);
  CHECK(a.phi_s.value() == b.phi_s.value());
  CHECK(a.phi_n.value() == b.phi_n.value());
  auto wa = mvdr_souden(a.phi_s, a.phi_n);
  auto wb = mvdr_souden(b.phi_s, b.phi_n);
  CHECK(wa.weights.value() == wb.weights.value());
  StftConfig cfg;
  cfg.frame_length = 2 * (F - 1);
  cfg.hop = cfg.frame_length / 4;
  CHECK(apply_bf(wa.weights, real3, cfg, 5 * cfg.hop).value() ==
        apply_bf(wb.weights, augmented, cfg, 5 * cfg.hop).value());
}

TEST_CASE("full mask -> SCM -> MVDR -> istft -> SNR chain passes finite differences") {
  Rng rng(8);
  StftConfig cfg;
  cfg.frame_length = 4;  // 3 bins
  cfg.hop = 1;
  const int F = 3;
  const std::int64_t frames = 4;
  const std::int64_t T = frames * cfg.hop;

  std::vector<ad::Tensor> specs{random_spec(frames, F, rng, true), random_spec(frames, F, rng, true)};
  std::vector<double> mask(static_cast<std::size_t>(frames * F));
  for (auto& m : mask) m = rng.uniform(0.1, 0.9);
  std::vector<double> ref(static_cast<std::size_t>(T));
  for (auto& v : ref) v = rng.normal();
  auto ref_t = ad::Tensor::leaf({T}, ref);

  auto make_loss = [&]() {
    auto scm = estimate_scm(specs, mask);
    auto res = mvdr_souden(scm.phi_s, scm.phi_n);
    auto out = apply_bf(res.weights, specs, cfg, T);
    return snr_loss(ref_t, out);
  };
  CHECK(fd::check(make_loss, specs, 1e-5) < 1e-3);
}

TEST_CASE("mvdr input validation") {
  Rng rng(9);
  auto phi = cov_tensor({random_pd(2, rng)}, 2);
  auto phi3 = cov_tensor({random_pd(3, rng)}, 3);
  CHECK_THROWS_AS(mvdr_souden(phi, phi3), std::invalid_argument);
  BfConfig cfg;
  cfg.ref_channel = 5;
  CHECK_THROWS_AS(mvdr_souden(phi, phi, cfg), std::invalid_argument);
}
