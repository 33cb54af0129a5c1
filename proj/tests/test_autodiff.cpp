#include <doctest.h>

#include <complex>

#include "fd_check.hpp"
#include "nnvme/autodiff.hpp"
#include "nnvme/complex_ops.hpp"
#include "nnvme/nn_ops.hpp"
#include "nnvme/rng.hpp"

using namespace nnvme;
using namespace nnvme::ad;

namespace {

Tensor random_leaf(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> d(static_cast<std::size_t>(numel(shape)));
  for (double& v : d) v = rng.normal() * scale;
  return Tensor::leaf(std::move(shape), std::move(d), true);
}

// random well-conditioned complex matrices [F, C, C, 2]: A = R + 3*C*I
Tensor random_cmat(std::int64_t F, int C, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> d(static_cast<std::size_t>(F * C * C * 2));
  for (double& v : d) v = rng.normal();
  for (std::int64_t f = 0; f < F; ++f)
    for (int c = 0; c < C; ++c) d[((f * C + c) * C + c) * 2] += 3.0 * C;
  return Tensor::leaf({F, C, C, 2}, std::move(d), true);
}

}  // namespace

TEST_CASE("d(x*x)/dx at x=3 is 6") {
  auto x = Tensor::leaf({1}, {3.0}, true);
  auto y = mul(x, x);
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("elementwise ops pass finite differences") {
  auto a = random_leaf({4, 5}, 1);
  auto b = random_leaf({4, 5}, 2);
  auto s = random_leaf({1}, 3);
  std::vector<Tensor> leaves{a, b, s};
  auto loss = [&] {
    auto t = add(mul(a, b), sub(a, scale(b, 0.3)));
    t = div(t, add_const(mul(b, b), 1.0));
    t = prelu(t, s);
    t = relu(add_const(t, 0.05));
    t = add(t, scale_by(a, s));
    auto q = sum(mul(t, t));
    return log(add_const(q, 1.0));
  };
  CHECK(fd::check(loss, leaves) < 1e-6);
}

TEST_CASE("concat/slice pass finite differences") {
  auto a = random_leaf({2, 6}, 4);
  auto b = random_leaf({3, 6}, 5);
  std::vector<Tensor> leaves{a, b};
  auto loss = [&] {
    auto c = concat0({a, b});
    auto d = slice0(c, 1, 3);
    return sum(mul(d, d));
  };
  CHECK(fd::check(loss, leaves) < 1e-6);
}

TEST_CASE("conv1d passes finite differences") {
  for (auto [stride, dil, pad, groups] :
       {std::array<int, 4>{1, 1, 2, 1}, {2, 1, 4, 1}, {1, 2, 2, 1}, {1, 1, 1, 4}}) {
    auto x = random_leaf({4, 20}, 10 + stride + dil);
    auto w = random_leaf({8, 4 / groups, 3}, 20 + groups, 0.5);
    auto bias = random_leaf({8}, 30);
    std::vector<Tensor> leaves{x, w, bias};
    ConvSpec spec{stride, dil, pad, groups};
    auto loss = [&] {
      auto y = conv1d(x, w, bias, spec);
      return sum(mul(y, y));
    };
    CHECK(fd::check(loss, leaves) < 1e-6);
  }
}

TEST_CASE("conv_transpose1d passes finite differences") {
  auto x = random_leaf({3, 10}, 40);
  auto w = random_leaf({3, 2, 8}, 41, 0.5);
  std::vector<Tensor> leaves{x, w};
  auto loss = [&] {
    auto y = conv_transpose1d(x, w, 4, 44);
    return sum(mul(y, y));
  };
  CHECK(fd::check(loss, leaves) < 1e-6);
}

TEST_CASE("global_layer_norm passes finite differences") {
  auto x = random_leaf({5, 7}, 50);
  auto g = random_leaf({5}, 51);
  auto b = random_leaf({5}, 52);
  std::vector<Tensor> leaves{x, g, b};
  auto loss = [&] {
    auto y = global_layer_norm(x, g, b);
    return sum(mul(y, y));
  };
  CHECK(fd::check(loss, leaves, 1e-6) < 1e-5);
}

TEST_CASE("stft_t and istft_t pass finite differences") {
  StftConfig cfg;
  cfg.frame_length = 32;
  cfg.hop = 8;
  auto x = random_leaf({64}, 60);
  std::vector<Tensor> leaves{x};
  auto loss = [&] {
    auto X = stft_t(x, cfg);
    auto y = istft_t(X, cfg, 64);
    auto d = sub(y, x);
    return add(sum(mul(d, d)), sum(mul(X, X)));
  };
  CHECK(fd::check(loss, leaves) < 1e-6);
}

TEST_CASE("istft_t inverts stft_t") {
  StftConfig cfg;
  auto x = random_leaf({3000}, 61);
  auto y = istft_t(stft_t(x, cfg), cfg, 3000);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < 3000; ++i) {
    double d = y.value()[i] - x.value()[i];
    num += d * d;
    den += x.value()[i] * x.value()[i];
  }
  CHECK(std::sqrt(num / den) < 1e-9);
}

TEST_CASE("masked_scm matches direct formula and passes finite differences") {
  const std::int64_t Tf = 6, F = 4;
  const int C = 3;
  std::vector<Tensor> specs;
  for (int c = 0; c < C; ++c) specs.push_back(random_leaf({Tf, F, 2}, 70 + c));
  Rng rng(99);
  std::vector<double> mask(Tf * F);
  for (double& m : mask) m = rng.uniform();

  auto phi = masked_scm(specs, mask);
  // direct oracle at one (f, a, b)
  {
    const std::int64_t f = 2;
    const int a = 1, b = 2;
    std::complex<double> acc{0, 0};
    double msum = 0;
    for (std::int64_t t = 0; t < Tf; ++t) {
      auto ya = std::complex<double>(specs[a].value()[(t * F + f) * 2],
                                     specs[a].value()[(t * F + f) * 2 + 1]);
      auto yb = std::complex<double>(specs[b].value()[(t * F + f) * 2],
                                     specs[b].value()[(t * F + f) * 2 + 1]);
      acc += mask[t * F + f] * ya * std::conj(yb);
      msum += mask[t * F + f];
    }
    acc /= msum;
    CHECK(phi.value()[((f * C + a) * C + b) * 2] == doctest::Approx(acc.real()));
    CHECK(phi.value()[((f * C + a) * C + b) * 2 + 1] == doctest::Approx(acc.imag()));
  }
  // Hermitian by construction
  for (std::int64_t f = 0; f < F; ++f)
    for (int a = 0; a < C; ++a)
      for (int b = 0; b < C; ++b) {
        CHECK(phi.value()[((f * C + a) * C + b) * 2] ==
              doctest::Approx(phi.value()[((f * C + b) * C + a) * 2]).epsilon(1e-12));
        CHECK(phi.value()[((f * C + a) * C + b) * 2 + 1] ==
              doctest::Approx(-phi.value()[((f * C + b) * C + a) * 2 + 1]).epsilon(1e-12));
      }

  std::vector<Tensor> leaves = specs;
  auto mk = [&] {
    auto p = masked_scm(specs, mask);
    auto w = random_leaf({F, C, C, 2}, 777, 1.0);  // fixed weights, not a leaf under test
    w.node()->requires_grad = false;
    w.node()->is_param = false;
    return sum(mul(p, w));
  };
  CHECK(fd::check(mk, leaves) < 1e-6);
}

TEST_CASE("all-zero mask falls back to unmasked average with flag") {
  const std::int64_t Tf = 4, F = 2;
  std::vector<Tensor> specs{random_leaf({Tf, F, 2}, 80), random_leaf({Tf, F, 2}, 81)};
  std::vector<double> mask(Tf * F, 0.0);
  for (std::int64_t t = 0; t < Tf; ++t) mask[t * F + 1] = 1.0;  // bin 0 empty
  std::vector<int> fallback;
  auto phi = masked_scm(specs, mask, &fallback);
  REQUIRE(fallback.size() == 1);
  CHECK(fallback[0] == 0);
  // bin 0 equals plain average over frames
  std::complex<double> acc{0, 0};
  for (std::int64_t t = 0; t < Tf; ++t) {
    auto y0 = std::complex<double>(specs[0].value()[(t * F) * 2],
                                   specs[0].value()[(t * F) * 2 + 1]);
    acc += y0 * std::conj(y0);
  }
  acc /= double(Tf);
  CHECK(phi.value()[0] == doctest::Approx(acc.real()));
}

TEST_CASE("complex matrix ops pass finite differences") {
  const std::int64_t F = 3;
  const int C = 2;
  auto A = random_cmat(F, C, 90);
  auto B = random_cmat(F, C, 91);
  std::vector<Tensor> leaves{A, B};
  auto loss = [&] {
    auto P = cmatmul(cinverse(diag_load(A, 1e-3)), B);
    auto col = cselect_col(P, 1);
    auto tr = ctrace(P);
    auto w = cdiv_bcast(col, tr);
    return add(sum(mul(w, w)), sum(mul(P, P)));
  };
  CHECK(fd::check(loss, leaves) < 1e-6);
}

TEST_CASE("gradient through complex 2x2 inverse matches finite differences") {
  auto A = random_cmat(1, 2, 95);
  std::vector<Tensor> leaves{A};
  auto loss = [&] {
    auto B = cinverse(A);
    return sum(mul(B, B));
  };
  CHECK(fd::check(loss, leaves) < 1e-4 * 1e0);
  // also verify forward against the analytic 2x2 inverse
  auto B = cinverse(A);
  auto at = [&](int i, int j) {
    return std::complex<double>(A.value()[(i * 2 + j) * 2], A.value()[(i * 2 + j) * 2 + 1]);
  };
  auto det = at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0);
  auto b00 = at(1, 1) / det;
  CHECK(B.value()[0] == doctest::Approx(b00.real()).epsilon(1e-10));
  CHECK(B.value()[1] == doctest::Approx(b00.imag()).epsilon(1e-10));
}

TEST_CASE("bf_apply passes finite differences") {
  const std::int64_t Tf = 5, F = 3;
  const int C = 2;
  auto w = random_leaf({F, C, 2}, 100);
  std::vector<Tensor> specs{random_leaf({Tf, F, 2}, 101), random_leaf({Tf, F, 2}, 102)};
  std::vector<Tensor> leaves{w, specs[0], specs[1]};
  auto loss = [&] {
    auto X = bf_apply(w, specs);
    return sum(mul(X, X));
  };
  CHECK(fd::check(loss, leaves) < 1e-6);
}

TEST_CASE("backward frees interior node storage") {
  auto a = random_leaf({50, 50}, 110);
  const auto baseline = live_nodes().load();
  for (int step = 0; step < 3; ++step) {
    auto loss = sum(mul(mul(a, a), add(a, a)));
    loss.backward();
    // graph still referenced here, but interior value buffers are released
  }
  CHECK(live_nodes().load() == baseline);
}

TEST_CASE("backward on non-scalar throws") {
  auto a = random_leaf({2, 2}, 120);
  auto b = mul(a, a);
  CHECK_THROWS(b.backward());
}
