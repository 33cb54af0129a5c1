#pragma once

// Shoebox image-method RIR generation and supervised mixture synthesis:
// reverberant three-speaker scenes with a 3-mic linear sub-array (10 cm
// spacing), per-interferer SIR scaling and spherically-isotropic noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "nnvme/rng.hpp"
#include "nnvme/wave.hpp"

namespace nnvme {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline double dist(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                   (a.z - b.z) * (a.z - b.z));
}

struct RoomSpec {
  double width = 6.0, depth = 5.0, height = 3.0;
  double t60 = 0.2;
  double speed_of_sound = 343.0;

  double volume() const { return width * depth * height; }
  double surface() const {
    return 2.0 * (width * depth + width * height + depth * height);
  }

  // Sabine wall absorption for the target t60; > 1 means unachievable.
  double sabine_absorption() const {
    if (t60 <= 0.0) return 1.0;
    return 0.161 * volume() / (surface() * t60);
  }

  // Absorption actually applied to the walls. The image-method tail is
  // dominated by near-axial paths that hit walls less often than the Sabine
  // mean free path assumes, so the Sabine estimate alone decays too slowly.
  // Floor it so reflections along the longest axis still lose 60 dB per t60.
  double wall_absorption() const {
    if (t60 <= 0.0) return 1.0;
    const double longest = std::max({width, depth, height});
    const double axial = 1.0 - std::pow(10.0, -6.0 * longest / (speed_of_sound * t60));
    return std::min(1.0, std::max(sabine_absorption(), axial));
  }

  void validate() const {
    if (width <= 0 || depth <= 0 || height <= 0 || t60 < 0 || speed_of_sound <= 0)
      throw std::invalid_argument("RoomSpec: non-positive parameter");
    if (t60 > 0.0 && sabine_absorption() > 1.0)
      throw std::invalid_argument("RoomSpec: t60 unachievable for this room volume");
  }

  bool contains(const Vec3& p) const {
    return p.x > 0 && p.x < width && p.y > 0 && p.y < depth && p.z > 0 && p.z < height;
  }
};

struct Scene {
  RoomSpec room;
  std::vector<Vec3> source_positions;  // I sources; index 0 is the target speaker
  std::vector<Vec3> mic_positions;     // C mics; order [ch4, ch5, ch6]
  std::vector<double> sir_db;          // per interferer, relative to source 0
  double noise_snr_db = 20.0;
  std::uint64_t seed = 0;
};

struct MixtureSample {
  MultichannelWave mixture;             // all C channels
  MultichannelWave r;                   // RM channels (ch4, ch6)
  MultichannelWave v;                   // VM target channel (ch5)
  std::vector<MultichannelWave> images; // per source, all C channels (scaled)
  MultichannelWave noise;               // scaled noise, all C channels
  Scene scene;

  // per-source reference images at c_ref (channel index 0 == ch4)
  MultichannelWave x_at_ref(int i) const { return images[i].select_channels({0}); }
};

namespace roomdetail {

constexpr int kSincTaps = 81;  // windowed-sinc taps for fractional delays

// Add amplitude * delta(t - delay) into rir with windowed-sinc interpolation.
inline void add_fractional_impulse(std::vector<double>& rir, double delay, double amp) {
  const int half = kSincTaps / 2;
  const int center = static_cast<int>(std::floor(delay));
  const double frac = delay - center;
  for (int k = -half; k <= half; ++k) {
    const int idx = center + k;
    if (idx < 0 || idx >= static_cast<int>(rir.size())) continue;
    const double t = k - frac;
    const double sinc = (t == 0.0) ? 1.0 : std::sin(M_PI * t) / (M_PI * t);
    const double win = 0.5 * (1.0 + std::cos(M_PI * (k - frac) / (half + 1)));
    rir[idx] += amp * sinc * win;
  }
}

}  // namespace roomdetail

// Reflection order covering 1.5 * t60 of propagation in this room.
inline int auto_max_order(const RoomSpec& room) {
  if (room.t60 <= 0.0) return 0;
  const double reach = room.speed_of_sound * 1.5 * room.t60;
  const double min_dim = std::min({room.width, room.depth, room.height});
  return static_cast<int>(std::ceil(reach / (2.0 * min_dim))) + 1;
}

inline std::vector<double> image_method_rir(const RoomSpec& room, const Vec3& src,
                                            const Vec3& mic, int fs, int max_order) {
  room.validate();
  if (fs <= 0) throw std::invalid_argument("image_method_rir: fs must be positive");
  if (!room.contains(src) || !room.contains(mic))
    throw std::invalid_argument("image_method_rir: position outside room");
  if (dist(src, mic) < 1e-6)
    throw std::invalid_argument("image_method_rir: source coincides with microphone");

  const double absorption = (room.t60 > 0.0) ? room.wall_absorption() : 1.0;
  const double beta = std::sqrt(std::max(0.0, 1.0 - absorption));
  const double c = room.speed_of_sound;

  const double direct = dist(src, mic);
  const std::size_t len = static_cast<std::size_t>(
      std::ceil((direct / c + 1.5 * room.t60) * fs)) + roomdetail::kSincTaps + 1;
  std::vector<double> rir(len, 0.0);

  const std::array<double, 3> L{room.width, room.depth, room.height};
  const std::array<double, 3> s{src.x, src.y, src.z};
  const std::array<double, 3> m{mic.x, mic.y, mic.z};
  const double max_reach = (static_cast<double>(len) / fs) * c;

  for (int qx = 0; qx <= 1; ++qx)
    for (int qy = 0; qy <= 1; ++qy)
      for (int qz = 0; qz <= 1; ++qz)
        for (int nx = -max_order; nx <= max_order; ++nx)
          for (int ny = -max_order; ny <= max_order; ++ny)
            for (int nz = -max_order; nz <= max_order; ++nz) {
              const std::array<int, 3> q{qx, qy, qz};
              const std::array<int, 3> nn{nx, ny, nz};
              int refl = 0;
              double d2 = 0.0;
              for (int dim = 0; dim < 3; ++dim) {
                refl += std::abs(nn[dim] - q[dim]) + std::abs(nn[dim]);
                const double pos = (1 - 2 * q[dim]) * s[dim] + 2.0 * nn[dim] * L[dim];
                const double diff = pos - m[dim];
                d2 += diff * diff;
              }
              if (refl > 0 && beta == 0.0) continue;
              const double d = std::sqrt(d2);
              if (d > max_reach) continue;
              const double amp = std::pow(beta, refl) / (4.0 * M_PI * std::max(d, 1e-3));
              roomdetail::add_fractional_impulse(rir, d / c * fs, amp);
            }
  return rir;
}

// Full convolution truncated to the source length.
inline std::vector<double> convolve_trunc(std::span<const double> x,
                                          const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t k = 0; k < h.size(); ++k) {
    const double hk = h[k];
    if (hk == 0.0) continue;
    const std::size_t n_max = x.size() > k ? x.size() - k : 0;
    for (std::size_t n = 0; n < n_max; ++n) y[n + k] += hk * x[n];
  }
  return y;
}

// Speech-like test signal: pitch-pulsed formant-filtered excitation mixed with
// breathy noise under a syllabic envelope; exactly unit RMS.
inline std::vector<double> synth_speech_like(std::uint64_t seed, double duration,
                                             int fs = 8000) {
  if (duration <= 0.0) throw std::invalid_argument("synth_speech_like: duration <= 0");
  const std::size_t T = static_cast<std::size_t>(duration * fs);
  Rng rng(seed);
  std::vector<double> x(T, 0.0);

  // glottal-like pulse train with wandering pitch + noise excitation
  const double f0_base = rng.uniform(90.0, 220.0);
  double phase = 0.0;
  double voicing = rng.uniform(0.4, 0.9);
  std::vector<double> exc(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double f0 = f0_base * (1.0 + 0.15 * std::sin(2.0 * M_PI * 2.3 * t / fs +
                                                       rng.uniform() * 0.01));
    phase += f0 / fs;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    exc[t] = voicing * pulse * 8.0 + (1.0 - voicing) * rng.normal() * 0.5;
  }

  // a few random formant resonators (biquad peaks)
  for (int formant = 0; formant < 3; ++formant) {
    const double fc = rng.uniform(300.0, 3200.0);
    const double bw = rng.uniform(80.0, 250.0);
    const double r = std::exp(-M_PI * bw / fs);
    const double theta = 2.0 * M_PI * fc / fs;
    const double a1 = -2.0 * r * std::cos(theta), a2 = r * r;
    double y1 = 0.0, y2 = 0.0;
    const double gain = (1.0 - r) * rng.uniform(0.5, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double y = gain * exc[t] - a1 * y1 - a2 * y2;
      y2 = y1;
      y1 = y;
      x[t] += y;
    }
  }

  // syllabic amplitude envelope: smoothed random gate at a few Hz
  double env = 0.5, target = rng.uniform(0.2, 1.0);
  std::size_t next_switch = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (t >= next_switch) {
      target = rng.uniform(0.1, 1.0);
      next_switch = t + static_cast<std::size_t>(rng.uniform(0.08, 0.35) * fs);
    }
    env += (target - env) * (30.0 / fs);
    x[t] *= env;
  }

  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(T));
  if (rms < 1e-12) throw std::runtime_error("synth_speech_like: degenerate signal");
  for (double& v : x) v /= rms;
  return x;
}

// Spherically-isotropic noise: sum of far-field plane waves from random
// directions applied through anechoic steering delays around the array center.
inline MultichannelWave diffuse_noise(const std::vector<Vec3>& mics, std::int64_t T,
                                      int fs, std::uint64_t seed, double c = 343.0,
                                      int num_directions = 64) {
  const int C = static_cast<int>(mics.size());
  MultichannelWave out(C, T, fs);
  Vec3 center{0, 0, 0};
  for (const auto& m : mics) {
    center.x += m.x / C;
    center.y += m.y / C;
    center.z += m.z / C;
  }
  Rng rng(seed);
  const int half = roomdetail::kSincTaps / 2;
  std::vector<double> src(static_cast<std::size_t>(T) + 2 * half + 4);
  for (int dir = 0; dir < num_directions; ++dir) {
    // uniform direction on the sphere
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Vec3 d{rxy * std::cos(phi), rxy * std::sin(phi), z};
    for (double& v : src) v = rng.normal();
    for (int m = 0; m < C; ++m) {
      const double proj = d.x * (mics[m].x - center.x) + d.y * (mics[m].y - center.y) +
                          d.z * (mics[m].z - center.z);
      const double delay = -proj / c * fs;  // relative steering delay in samples
      // read src at fractional offset via windowed sinc
      double* y = out.channel(m);
      const double shifted = delay + half + 2;
      const int base = static_cast<int>(std::floor(shifted));
      const double frac = shifted - base;
      for (int k = -half; k <= half; ++k) {
        const double t = k - frac;
        const double sinc = (t == 0.0) ? 1.0 : std::sin(M_PI * t) / (M_PI * t);
        const double win = 0.5 * (1.0 + std::cos(M_PI * (k - frac) / (half + 1)));
        const double w = sinc * win;
        if (w == 0.0) continue;
        const int off = base + k;
        for (std::int64_t n = 0; n < T; ++n) y[n] += w * src[n + off];
      }
    }
  }
  const double g = 1.0 / std::sqrt(static_cast<double>(num_directions));
  for (double& v : out.data()) v *= g;
  return out;
}

// Mix sources into a scene: per-channel RIR convolution, interferer SIR scaling
// relative to source 0 at the reference channel, then noise at noise_snr_db
// relative to the summed speech. The mixture equals images + noise exactly.
inline MixtureSample synthesize(const Scene& scene,
                                const std::vector<std::vector<double>>& sources,
                                const MultichannelWave& noise) {
  const int C = static_cast<int>(scene.mic_positions.size());
  const int I = static_cast<int>(scene.source_positions.size());
  if (static_cast<int>(sources.size()) != I)
    throw std::invalid_argument("synthesize: source count mismatch");
  if (noise.channels() != C)
    throw std::invalid_argument("synthesize: noise channel count mismatch");
  const std::int64_t T = static_cast<std::int64_t>(sources[0].size());
  const int fs = noise.sample_rate();
  if (static_cast<int>(scene.sir_db.size()) != I - 1)
    throw std::invalid_argument("synthesize: sir_db must have one entry per interferer");

  MixtureSample out;
  out.scene = scene;
  const int max_order = auto_max_order(scene.room);
  out.images.reserve(I);
  for (int i = 0; i < I; ++i) {
    double energy = 0.0;
    for (double v : sources[i]) energy += v * v;
    if (energy <= 0.0) throw std::invalid_argument("synthesize: silent source");
    MultichannelWave img(C, T, fs);
    for (int m = 0; m < C; ++m) {
      auto rir = image_method_rir(scene.room, scene.source_positions[i],
                                  scene.mic_positions[m], fs, max_order);
      auto y = convolve_trunc(sources[i], rir);
      std::copy(y.begin(), y.end(), img.channel(m));
    }
    out.images.push_back(std::move(img));
  }

  // SIR scaling at the reference channel (index 0)
  const double e_ref = out.images[0].channel_energy(0);
  for (int i = 1; i < I; ++i) {
    const double e_i = out.images[i].channel_energy(0);
    if (e_i <= 0.0) throw std::invalid_argument("synthesize: zero-energy image");
    const double gain = std::sqrt(e_ref * std::pow(10.0, -scene.sir_db[i - 1] / 10.0) / e_i);
    for (double& v : out.images[i].data()) v *= gain;
  }

  // noise scaling relative to the summed speech at the reference channel
  MultichannelWave speech_sum(C, T, fs);
  for (int i = 0; i < I; ++i)
    for (std::size_t k = 0; k < speech_sum.data().size(); ++k)
      speech_sum.data()[k] += out.images[i].data()[k];
  const double e_speech = speech_sum.channel_energy(0);
  const double e_noise = noise.channel_energy(0);
  if (e_noise <= 0.0) throw std::invalid_argument("synthesize: silent noise");
  const double g_noise =
      std::sqrt(e_speech * std::pow(10.0, -scene.noise_snr_db / 10.0) / e_noise);
  out.noise = noise;
  for (double& v : out.noise.data()) v *= g_noise;

  out.mixture = MultichannelWave(C, T, fs);
  for (std::size_t k = 0; k < out.mixture.data().size(); ++k)
    out.mixture.data()[k] = speech_sum.data()[k] + out.noise.data()[k];

  out.r = out.mixture.select_channels({0, 2});
  out.v = out.mixture.select_channels({1});
  return out;
}

// Draw a scene from the simulation protocol ranges; deterministic per seed.
inline Scene sample_scene(std::uint64_t seed) {
  Rng rng(seed);
  Scene scene;
  scene.seed = seed;
  scene.room.width = rng.uniform(2.5, 10.0);
  scene.room.depth = rng.uniform(2.5, 10.0);
  scene.room.height = rng.uniform(2.5, 5.0);
  // redraw t60 until the Sabine absorption is realizable for this room
  for (int tries = 0;; ++tries) {
    scene.room.t60 = rng.uniform(0.0, 0.3);
    if (scene.room.sabine_absorption() <= 1.0) break;
    if (tries > 1000) throw std::runtime_error("sample_scene: cannot realize t60");
  }

  const double clear = 0.3;
  const double arm = 0.1;  // mic spacing
  // array: collinear triplet at 10 cm intervals, random yaw
  const double yaw = rng.uniform(0.0, 2.0 * M_PI);
  const Vec3 dir{std::cos(yaw), std::sin(yaw), 0.0};
  Vec3 center;
  center.x = rng.uniform(clear + arm, scene.room.width - clear - arm);
  center.y = rng.uniform(clear + arm, scene.room.depth - clear - arm);
  center.z = rng.uniform(clear, scene.room.height - clear);
  for (int m = -1; m <= 1; ++m)
    scene.mic_positions.push_back(
        {center.x + m * arm * dir.x, center.y + m * arm * dir.y, center.z});

  const int I = 3;
  for (int i = 0; i < I; ++i) {
    for (int tries = 0;; ++tries) {
      Vec3 p;
      p.x = rng.uniform(clear, scene.room.width - clear);
      p.y = rng.uniform(clear, scene.room.depth - clear);
      p.z = rng.uniform(clear, scene.room.height - clear);
      bool ok = true;
      for (const auto& m : scene.mic_positions)
        if (dist(p, m) < clear) ok = false;
      if (ok) {
        scene.source_positions.push_back(p);
        break;
      }
      if (tries > 1000) throw std::runtime_error("sample_scene: cannot place source");
    }
  }
  for (int i = 0; i < I - 1; ++i) scene.sir_db.push_back(rng.uniform(-3.0, 3.0));
  scene.noise_snr_db = 20.0;
  return scene;
}

// Generate the full supervised tuple for a scene seed.
inline MixtureSample make_mixture(const Scene& scene, double duration, int fs) {
  std::vector<std::vector<double>> sources;
  for (std::size_t i = 0; i < scene.source_positions.size(); ++i)
    sources.push_back(synth_speech_like(Rng::derive(scene.seed, 100 + i), duration, fs));
  const std::int64_t T = static_cast<std::int64_t>(duration * fs);
  auto noise = diffuse_noise(scene.mic_positions, T, fs, Rng::derive(scene.seed, 999),
                             scene.room.speed_of_sound);
  return synthesize(scene, sources, noise);
}

}  // namespace nnvme
