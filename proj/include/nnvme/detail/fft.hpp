#pragma once

// Iterative radix-2 complex FFT, power-of-two sizes only.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace nnvme::detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place forward (sign = -1) or inverse-unscaled (sign = +1) FFT.
inline void fft_inplace(std::vector<std::complex<double>>& a, int sign) {
  const std::size_t n = a.size();
  if (!is_pow2(n)) throw std::invalid_argument("fft: size must be a power of two");
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// One-sided real-input FFT: n real samples -> n/2+1 complex bins.
inline void rfft(const double* x, std::size_t n, std::complex<double>* out) {
  std::vector<std::complex<double>> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = x[i];
  fft_inplace(a, -1);
  for (std::size_t k = 0; k <= n / 2; ++k) out[k] = a[k];
}

// Inverse of rfft with 1/n scaling: n/2+1 complex bins -> n real samples.
inline void irfft(const std::complex<double>* bins, std::size_t n, double* out) {
  std::vector<std::complex<double>> a(n);
  for (std::size_t k = 0; k <= n / 2; ++k) a[k] = bins[k];
  for (std::size_t k = n / 2 + 1; k < n; ++k) a[k] = std::conj(bins[n - k]);
  fft_inplace(a, +1);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i].real() * inv;
}

}  // namespace nnvme::detail
