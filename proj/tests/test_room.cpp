#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>

#include "nnvme/room.hpp"
#include "nnvme/stft.hpp"

using namespace nnvme;

TEST_CASE("t60 = 0 gives a bare direct path at the geometric delay") {
  RoomSpec room{6.0, 5.0, 3.0, 0.0};
  Vec3 src{1.5, 2.0, 1.5}, mic{4.0, 3.0, 1.5};
  const int fs = 8000;
  auto rir = image_method_rir(room, src, mic, fs, 0);
  const double d = dist(src, mic);
  const std::int64_t expect_delay = std::llround(d / room.speed_of_sound * fs);
  std::int64_t peak = std::max_element(rir.begin(), rir.end(),
                                       [](double a, double b) {
                                         return std::abs(a) < std::abs(b);
                                       }) - rir.begin();
  CHECK(std::abs(peak - expect_delay) <= 1);
  // windowed-sinc impulse preserves L2 amplitude
  double e = 0.0;
  for (double v : rir) e += v * v;
  CHECK(std::sqrt(e) == doctest::Approx(1.0 / (4.0 * M_PI * d)).epsilon(0.01));
}

TEST_CASE("equidistant microphones see identical direct paths") {
  RoomSpec room{6.0, 5.0, 3.0, 0.0};
  Vec3 src{3.0, 2.5, 1.5};
  Vec3 mic_a{2.0, 1.0, 1.5}, mic_b{4.0, 1.0, 1.5};  // both at same distance from src
  REQUIRE(dist(src, mic_a) == doctest::Approx(dist(src, mic_b)));
  auto ra = image_method_rir(room, src, mic_a, 8000, 0);
  auto rb = image_method_rir(room, src, mic_b, 8000, 0);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i)
    CHECK(ra[i] == doctest::Approx(rb[i]).epsilon(1e-12));
}

TEST_CASE("t60 = 0.3 RIR envelope decays at least 60 dB within 0.3 s") {
  RoomSpec room{6.0, 5.0, 3.0, 0.3};
  Vec3 src{1.5, 2.0, 1.5}, mic{4.2, 3.1, 1.6};
  const int fs = 8000;
  auto rir = image_method_rir(room, src, mic, fs, auto_max_order(room));
  // short-window RMS envelope (2 ms)
  const std::int64_t w = fs / 500;
  std::vector<double> env;
  for (std::size_t i = 0; i + w <= rir.size(); i += w) {
    double e = 0.0;
    for (std::int64_t k = 0; k < w; ++k) e += rir[i + k] * rir[i + k];
    env.push_back(e / w);
  }
  const std::size_t peak = std::max_element(env.begin(), env.end()) - env.begin();
  const std::size_t end = peak + static_cast<std::size_t>(0.3 * fs / w);
  REQUIRE(end < env.size());
  const double drop = 10.0 * std::log10(env[peak] / std::max(env[end], 1e-300));
  CHECK(drop >= 60.0);
}

TEST_CASE("RIR generation is deterministic and delays match geometry") {
  for (int k = 0; k < 20; ++k) {
    auto scene = sample_scene(1000 + k);
    auto r1 = image_method_rir(scene.room, scene.source_positions[0],
                               scene.mic_positions[0], 8000, 1);
    auto r2 = image_method_rir(scene.room, scene.source_positions[0],
                               scene.mic_positions[0], 8000, 1);
    CHECK(r1 == r2);
    // direct-path arrival, isolated with an anechoic copy of the same geometry
    RoomSpec dry = scene.room;
    dry.t60 = 0.0;
    auto rd = image_method_rir(dry, scene.source_positions[0], scene.mic_positions[0],
                               8000, 0);
    const double d = dist(scene.source_positions[0], scene.mic_positions[0]);
    const std::int64_t expect = std::llround(d / scene.room.speed_of_sound * 8000);
    std::int64_t peak = std::max_element(rd.begin(), rd.end(),
                                         [](double a, double b) {
                                           return std::abs(a) < std::abs(b);
                                         }) - rd.begin();
    CHECK(std::abs(peak - expect) <= 1);
    // the reverberant RIR contains that same direct component
    CHECK(std::abs(r1[peak]) > 0.5 * std::abs(rd[peak]));
  }
}

TEST_CASE("geometry and config errors") {
  RoomSpec room{6.0, 5.0, 3.0, 0.2};
  CHECK_THROWS(image_method_rir(room, {1, 1, 1}, {1, 1, 1}, 8000, 1));
  CHECK_THROWS(image_method_rir(room, {-1, 1, 1}, {2, 2, 2}, 8000, 1));
  RoomSpec cramped{2.5, 2.5, 2.5, 0.01};  // Sabine absorption > 1
  CHECK_THROWS(image_method_rir(cramped, {1, 1, 1}, {2, 2, 2}, 8000, 1));
}

TEST_CASE("sample_scene: determinism, ranges, exact mic spacing") {
  auto a = sample_scene(7);
  auto b = sample_scene(7);
  CHECK(a.room.width == b.room.width);
  CHECK(a.source_positions[2].x == b.source_positions[2].x);
  CHECK(a.sir_db == b.sir_db);

  for (int k = 0; k < 2000; ++k) {
    auto s = sample_scene(50000 + k);
    CHECK(s.room.width >= 2.5);
    CHECK(s.room.width <= 10.0);
    CHECK(s.room.depth >= 2.5);
    CHECK(s.room.depth <= 10.0);
    CHECK(s.room.height >= 2.5);
    CHECK(s.room.height <= 5.0);
    CHECK(s.room.t60 >= 0.0);
    CHECK(s.room.t60 <= 0.3);
    for (double sir : s.sir_db) {
      CHECK(sir >= -3.0);
      CHECK(sir <= 3.0);
    }
    // collinear mics at exactly 0.10 m spacing
    CHECK(dist(s.mic_positions[0], s.mic_positions[1]) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(dist(s.mic_positions[1], s.mic_positions[2]) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(dist(s.mic_positions[0], s.mic_positions[2]) == doctest::Approx(0.2).epsilon(1e-12));
    for (const auto& p : s.source_positions) CHECK(s.room.contains(p));
    for (const auto& p : s.mic_positions) CHECK(s.room.contains(p));
  }
}

TEST_CASE("synth_speech_like: determinism, unit RMS, seed decorrelation") {
  auto a = synth_speech_like(3, 1.0);
  auto b = synth_speech_like(3, 1.0);
  CHECK(a == b);
  double rms = 0.0;
  for (double v : a) rms += v * v;
  rms = std::sqrt(rms / a.size());
  CHECK(rms == doctest::Approx(1.0).epsilon(1e-6));

  // normalized cross-correlation peak below 0.3 across seed pairs
  int tested = 0;
  for (std::uint64_t s = 0; s < 20; s += 2) {
    auto x = synth_speech_like(s, 1.0);
    auto y = synth_speech_like(s + 1, 1.0);
    double peak = 0.0;
    for (int lag = -400; lag <= 400; lag += 7) {
      double acc = 0.0;
      for (std::size_t t = 0; t < x.size(); ++t) {
        const std::int64_t u = static_cast<std::int64_t>(t) + lag;
        if (u >= 0 && u < static_cast<std::int64_t>(y.size())) acc += x[t] * y[u];
      }
      peak = std::max(peak, std::abs(acc) / static_cast<double>(x.size()));
    }
    CHECK(peak < 0.3);
    ++tested;
  }
  CHECK(tested == 10);
}

TEST_CASE("synthesize: SIR/SNR gains exact, additivity exact") {
  auto scene = sample_scene(4242);
  scene.sir_db = {0.0, 2.0};
  const int fs = 8000;
  std::vector<std::vector<double>> sources;
  for (int i = 0; i < 3; ++i) sources.push_back(synth_speech_like(10 + i, 1.0, fs));
  auto noise = diffuse_noise(scene.mic_positions, 8000, fs, 5);
  auto mix = synthesize(scene, sources, noise);

  // sir 0 dB: equal image energies at the reference channel
  CHECK(10.0 * std::log10(mix.images[0].channel_energy(0) /
                          mix.images[1].channel_energy(0)) ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(10.0 * std::log10(mix.images[0].channel_energy(0) /
                          mix.images[2].channel_energy(0)) ==
        doctest::Approx(2.0).epsilon(1e-9));

  // noise gain: 20 dB SNR vs summed speech at the reference channel
  MultichannelWave speech(3, 8000, fs);
  for (int i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < speech.data().size(); ++k)
      speech.data()[k] += mix.images[i].data()[k];
  const double snr =
      10.0 * std::log10(speech.channel_energy(0) / mix.noise.channel_energy(0));
  CHECK(snr == doctest::Approx(20.0).epsilon(1e-9));

  // decomposition: recomputing sum(images) + noise in the synthesis order
  // reproduces the mixture bit-exactly
  for (std::size_t k = 0; k < mix.mixture.data().size(); ++k) {
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) acc += mix.images[i].data()[k];
    acc += mix.noise.data()[k];
    REQUIRE(mix.mixture.data()[k] == acc);
  }

  // r/v channel split
  CHECK(mix.r.channels() == 2);
  CHECK(mix.v.channels() == 1);
  CHECK(mix.r.at(0, 123) == mix.mixture.at(0, 123));
  CHECK(mix.r.at(1, 123) == mix.mixture.at(2, 123));
  CHECK(mix.v.at(0, 123) == mix.mixture.at(1, 123));
}

TEST_CASE("synthesize rejects silent sources") {
  auto scene = sample_scene(11);
  std::vector<std::vector<double>> sources{
      synth_speech_like(1, 0.5), std::vector<double>(4000, 0.0), synth_speech_like(2, 0.5)};
  auto noise = diffuse_noise(scene.mic_positions, 4000, 8000, 5);
  CHECK_THROWS(synthesize(scene, sources, noise));
}

TEST_CASE("diffuse noise matches spherically-isotropic coherence") {
  std::vector<Vec3> mics{{1.0, 1.0, 1.0}, {1.1, 1.0, 1.0}, {1.2, 1.0, 1.0}};
  const int fs = 8000;
  auto noise = diffuse_noise(mics, 8 * fs, fs, 321);
  StftConfig cfg;
  auto spec = stft(noise, cfg);
  const double d = 0.1, c = 343.0;
  for (double freq : {500.0, 1500.0, 3000.0}) {
    const int f = static_cast<int>(std::lround(freq * cfg.frame_length / fs));
    std::complex<double> cross{0, 0};
    double p0 = 0, p1 = 0;
    for (std::int64_t t = 0; t < spec.frames(); ++t) {
      cross += spec.at(0, t, f) * std::conj(spec.at(1, t, f));
      p0 += std::norm(spec.at(0, t, f));
      p1 += std::norm(spec.at(1, t, f));
    }
    const double coh = cross.real() / std::sqrt(p0 * p1);
    const double arg = 2.0 * M_PI * (static_cast<double>(f) * fs / cfg.frame_length) * d / c;
    const double ideal = (arg == 0.0) ? 1.0 : std::sin(arg) / arg;
    CHECK(std::abs(coh - ideal) < 0.2);
  }
}
