#pragma once

// Multichannel time-domain waveforms and WAV file I/O (PCM16 and IEEE
// float32, little-endian).

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnvme {

class MultichannelWave {
 public:
  MultichannelWave() = default;
  MultichannelWave(int channels, std::int64_t samples, int sample_rate)
      : channels_(channels), samples_(samples), sample_rate_(sample_rate),
        data_(static_cast<std::size_t>(channels) * samples, 0.0) {
    if (channels <= 0 || samples <= 0 || sample_rate <= 0)
      throw std::invalid_argument("MultichannelWave: non-positive dimension");
  }

  int channels() const { return channels_; }
  std::int64_t samples() const { return samples_; }
  int sample_rate() const { return sample_rate_; }

  double* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * samples_; }
  const double* channel(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * samples_;
  }
  std::span<double> channel_span(int c) { return {channel(c), static_cast<std::size_t>(samples_)}; }
  std::span<const double> channel_span(int c) const {
    return {channel(c), static_cast<std::size_t>(samples_)};
  }

  double& at(int c, std::int64_t t) { return data_[static_cast<std::size_t>(c) * samples_ + t]; }
  double at(int c, std::int64_t t) const {
    return data_[static_cast<std::size_t>(c) * samples_ + t];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double channel_energy(int c) const {
    double e = 0.0;
    const double* p = channel(c);
    for (std::int64_t t = 0; t < samples_; ++t) e += p[t] * p[t];
    return e;
  }

  // Extract a subset of channels, in the given order.
  MultichannelWave select_channels(const std::vector<int>& idx) const {
    MultichannelWave out(static_cast<int>(idx.size()), samples_, sample_rate_);
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::memcpy(out.channel(static_cast<int>(i)), channel(idx[i]),
                  sizeof(double) * samples_);
    return out;
  }

 private:
  int channels_ = 0;
  std::int64_t samples_ = 0;
  int sample_rate_ = 0;
  std::vector<double> data_;
};

namespace wav {

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

enum class SampleFormat { pcm16, float32 };

inline void write(const std::string& path, const MultichannelWave& wave,
                  SampleFormat fmt = SampleFormat::float32) {
  const int C = wave.channels();
  const std::int64_t T = wave.samples();
  const int bytes_per = (fmt == SampleFormat::pcm16) ? 2 : 4;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(C * T * bytes_per);

  std::string hdr;
  hdr.reserve(44);
  hdr += "RIFF";
  detail::put_u32(hdr, 36 + data_bytes);
  hdr += "WAVEfmt ";
  detail::put_u32(hdr, 16);
  detail::put_u16(hdr, fmt == SampleFormat::pcm16 ? 1 : 3);
  detail::put_u16(hdr, static_cast<std::uint16_t>(C));
  detail::put_u32(hdr, static_cast<std::uint32_t>(wave.sample_rate()));
  detail::put_u32(hdr, static_cast<std::uint32_t>(wave.sample_rate() * C * bytes_per));
  detail::put_u16(hdr, static_cast<std::uint16_t>(C * bytes_per));
  detail::put_u16(hdr, static_cast<std::uint16_t>(8 * bytes_per));
  hdr += "data";
  detail::put_u32(hdr, data_bytes);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav::write: cannot open " + path);
  f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));

  std::vector<char> buf(static_cast<std::size_t>(data_bytes));
  char* out = buf.data();
  for (std::int64_t t = 0; t < T; ++t) {
    for (int c = 0; c < C; ++c) {
      double v = wave.at(c, t);
      if (fmt == SampleFormat::pcm16) {
        double clamped = std::fmin(1.0, std::fmax(-1.0, v));
        auto q = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
        std::memcpy(out, &q, 2);
        out += 2;
      } else {
        float fv = static_cast<float>(v);
        std::memcpy(out, &fv, 4);
        out += 4;
      }
    }
  }
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("wav::write: write failed for " + path);
}

inline MultichannelWave read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav::read: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("wav::read: not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* p = bytes.data() + pos;
    std::uint32_t chunk_len = detail::get_u32(p + 4);
    if (std::memcmp(p, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = detail::get_u16(p + 8);
      channels = detail::get_u16(p + 10);
      sample_rate = detail::get_u32(p + 12);
      bits = detail::get_u16(p + 22);
    } else if (std::memcmp(p, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (channels == 0 || data_off == 0)
    throw std::runtime_error("wav::read: missing fmt/data chunk: " + path);
  if (data_off + data_len > bytes.size()) data_len = bytes.size() - data_off;

  SampleFormat fmt;
  if (format == 1 && bits == 16) fmt = SampleFormat::pcm16;
  else if (format == 3 && bits == 32) fmt = SampleFormat::float32;
  else throw std::runtime_error("wav::read: unsupported format in " + path);

  const int bytes_per = (fmt == SampleFormat::pcm16) ? 2 : 4;
  const std::int64_t T = static_cast<std::int64_t>(data_len / (channels * bytes_per));
  MultichannelWave wave(channels, T, static_cast<int>(sample_rate));
  const unsigned char* src = bytes.data() + data_off;
  for (std::int64_t t = 0; t < T; ++t) {
    for (int c = 0; c < channels; ++c) {
      if (fmt == SampleFormat::pcm16) {
        std::int16_t q;
        std::memcpy(&q, src, 2);
        src += 2;
        wave.at(c, t) = q / 32767.0;
      } else {
        float fv;
        std::memcpy(&fv, src, 4);
        src += 4;
        wave.at(c, t) = fv;
      }
    }
  }
  return wave;
}

}  // namespace wav
}  // namespace nnvme
