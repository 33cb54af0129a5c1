#pragma once

// STFT / iSTFT with weighted overlap-add synthesis. The signal is padded by
// (frame_length - hop) zeros on both sides so every original sample gets full
// window coverage, which makes the round trip exact (up to float error) over
// the whole original extent.

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nnvme/detail/fft.hpp"
#include "nnvme/wave.hpp"

namespace nnvme {

enum class WindowKind { hann, sqrt_hann };

struct StftConfig {
  int frame_length = 512;
  int hop = 128;
  WindowKind window = WindowKind::sqrt_hann;

  int bins() const { return frame_length / 2 + 1; }

  void validate() const {
    if (frame_length <= 0 || hop <= 0 || hop > frame_length)
      throw std::invalid_argument("StftConfig: need 0 < hop <= frame_length");
    if (!detail::is_pow2(static_cast<std::size_t>(frame_length)))
      throw std::invalid_argument("StftConfig: frame_length must be a power of two");
  }
};

namespace detail {

inline std::vector<double> make_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.frame_length);
  const int N = cfg.frame_length;
  for (int n = 0; n < N; ++n) {
    double hann = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / N));  // periodic
    w[n] = (cfg.window == WindowKind::hann) ? hann : std::sqrt(hann);
  }
  return w;
}

// Per-offset overlap-add normalizer of the analysis*synthesis window product.
// Throws if the window/hop pair is not constant-overlap-add.
inline std::vector<double> cola_normalizer(const StftConfig& cfg,
                                           const std::vector<double>& win) {
  const int N = cfg.frame_length, H = cfg.hop;
  if (N % H != 0)
    throw std::invalid_argument("StftConfig: hop must divide frame_length (COLA)");
  std::vector<double> norm(H, 0.0);
  for (int r = 0; r < H; ++r)
    for (int j = r; j < N; j += H) norm[r] += win[j] * win[j];
  double lo = norm[0], hi = norm[0];
  for (double v : norm) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo <= 0.0 || (hi - lo) / hi > 1e-9)
    throw std::invalid_argument("StftConfig: window is not COLA at this hop");
  return norm;
}

}  // namespace detail

class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(int channels, std::int64_t frames, StftConfig cfg, int sample_rate,
              std::int64_t num_samples)
      : channels_(channels), frames_(frames), cfg_(cfg), sample_rate_(sample_rate),
        num_samples_(num_samples),
        bins_(static_cast<std::size_t>(channels) * frames * cfg.bins(), {0.0, 0.0}) {}

  int channels() const { return channels_; }
  std::int64_t frames() const { return frames_; }
  int bins() const { return cfg_.bins(); }
  const StftConfig& config() const { return cfg_; }
  int sample_rate() const { return sample_rate_; }
  std::int64_t num_samples() const { return num_samples_; }

  std::complex<double>& at(int c, std::int64_t t, int f) {
    return bins_[(static_cast<std::size_t>(c) * frames_ + t) * bins() + f];
  }
  std::complex<double> at(int c, std::int64_t t, int f) const {
    return bins_[(static_cast<std::size_t>(c) * frames_ + t) * bins() + f];
  }
  std::complex<double>* row(int c, std::int64_t t) {
    return bins_.data() + (static_cast<std::size_t>(c) * frames_ + t) * bins();
  }
  const std::complex<double>* row(int c, std::int64_t t) const {
    return bins_.data() + (static_cast<std::size_t>(c) * frames_ + t) * bins();
  }
  std::vector<std::complex<double>>& data() { return bins_; }
  const std::vector<std::complex<double>>& data() const { return bins_; }

 private:
  int channels_ = 0;
  std::int64_t frames_ = 0;
  StftConfig cfg_;
  int sample_rate_ = 0;
  std::int64_t num_samples_ = 0;
  std::vector<std::complex<double>> bins_;
};

inline std::int64_t stft_num_frames(std::int64_t num_samples, const StftConfig& cfg) {
  const std::int64_t pad = cfg.frame_length - cfg.hop;
  const std::int64_t padded = num_samples + 2 * pad;
  // round up so the final samples keep full window coverage
  return (padded - cfg.frame_length + cfg.hop - 1) / cfg.hop + 1;
}

inline Spectrogram stft(const MultichannelWave& wave, const StftConfig& cfg) {
  cfg.validate();
  if (wave.samples() < cfg.frame_length)
    throw std::invalid_argument("stft: signal shorter than one frame");
  const auto win = detail::make_window(cfg);
  const std::int64_t pad = cfg.frame_length - cfg.hop;
  const std::int64_t frames = stft_num_frames(wave.samples(), cfg);
  const int N = cfg.frame_length, F = cfg.bins();

  Spectrogram spec(wave.channels(), frames, cfg, wave.sample_rate(), wave.samples());
  std::vector<double> buf(N);
  for (int c = 0; c < wave.channels(); ++c) {
    const double* x = wave.channel(c);
    for (std::int64_t t = 0; t < frames; ++t) {
      const std::int64_t start = t * cfg.hop - pad;
      for (int n = 0; n < N; ++n) {
        const std::int64_t idx = start + n;
        double v = (idx >= 0 && idx < wave.samples()) ? x[idx] : 0.0;
        buf[n] = v * win[n];
      }
      detail::rfft(buf.data(), static_cast<std::size_t>(N), spec.row(c, t));
    }
  }
  (void)F;
  return spec;
}

inline MultichannelWave istft(const Spectrogram& spec) {
  const StftConfig& cfg = spec.config();
  cfg.validate();
  const auto win = detail::make_window(cfg);
  const auto norm = detail::cola_normalizer(cfg, win);
  const std::int64_t pad = cfg.frame_length - cfg.hop;
  const int N = cfg.frame_length;
  const std::int64_t T = spec.num_samples();
  const std::int64_t padded = (spec.frames() - 1) * cfg.hop + N;

  MultichannelWave out(spec.channels(), T, spec.sample_rate());
  std::vector<double> acc(static_cast<std::size_t>(padded));
  std::vector<double> frame(N);
  for (int c = 0; c < spec.channels(); ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::int64_t t = 0; t < spec.frames(); ++t) {
      detail::irfft(spec.row(c, t), static_cast<std::size_t>(N), frame.data());
      const std::int64_t start = t * cfg.hop;
      for (int n = 0; n < N; ++n) acc[start + n] += frame[n] * win[n];
    }
    double* y = out.channel(c);
    for (std::int64_t m = 0; m < T; ++m) {
      const std::int64_t p = m + pad;
      y[m] = acc[p] / norm[p % cfg.hop];
    }
  }
  return out;
}

}  // namespace nnvme
