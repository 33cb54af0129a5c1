#pragma once

// Dataset generation and loading. A sample is a pair of WAV files: the
// 3-channel mixture [rm4, vm5, rm6] and a 3-channel file holding each source's
// reverberant image at the reference channel. A JSONL manifest lists every
// sample with its scene parameters.

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnvme/room.hpp"
#include "nnvme/wave.hpp"

namespace nnvme {

struct DataConfig {
  int train_count = 1000;
  int dev_count = 100;
  int eval_count = 100;
  double duration = 2.0;
  int sample_rate = 8000;
  std::uint64_t seed = 1;

  void validate() const {
    if (train_count < 0 || dev_count < 0 || eval_count < 0)
      throw std::invalid_argument("DataConfig: negative sample count");
    if (duration <= 0.0 || sample_rate <= 0)
      throw std::invalid_argument("DataConfig: duration and sample_rate must be positive");
  }
};

// Seed-space offsets keep the three splits disjoint for any master seed.
inline std::uint64_t split_seed_base(const std::string& split) {
  if (split == "train") return 0;
  if (split == "dev") return 1'000'000;
  if (split == "eval") return 2'000'000;
  throw std::invalid_argument("unknown split: " + split);
}

struct SampleRecord {
  int id = 0;
  std::uint64_t seed = 0;
  std::string mixture_path;  // 3 channels: [rm4, vm5, rm6]
  std::string images_path;   // 3 channels: source i's image at the reference mic
  double t60 = 0.0;
  std::vector<double> sir_db;
  double noise_snr_db = 0.0;
};

// Generates `count` mixtures into out_dir/split and writes the manifest.
// Returns the manifest path.
inline std::string generate_split(const std::string& out_dir, const std::string& split,
                                  int count, const DataConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(out_dir) / split;
  fs::create_directories(dir);
  const fs::path manifest_path = dir / "manifest.jsonl";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("cannot write " + manifest_path.string());

  const std::uint64_t base = split_seed_base(split);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = Rng::derive(cfg.seed, base + static_cast<std::uint64_t>(i));
    const Scene scene = sample_scene(seed);
    const MixtureSample mix = make_mixture(scene, cfg.duration, cfg.sample_rate);

    char name[32];
    std::snprintf(name, sizeof(name), "sample_%05d", i);
    const std::string mix_file = std::string(name) + "_mix.wav";
    const std::string img_file = std::string(name) + "_img.wav";
    wav::write((dir / mix_file).string(), mix.mixture);

    MultichannelWave imgs(3, mix.mixture.samples(), cfg.sample_rate);
    for (int s = 0; s < 3; ++s) {
      const auto img = mix.x_at_ref(s);
      for (std::int64_t t = 0; t < img.samples(); ++t) imgs.at(s, t) = img.at(0, t);
    }
    wav::write((dir / img_file).string(), imgs);

    nlohmann::json row;
    row["id"] = i;
    row["seed"] = seed;
    row["mixture"] = mix_file;
    row["images"] = img_file;
    row["t60"] = scene.room.t60;
    row["sir_db"] = scene.sir_db;
    row["noise_snr_db"] = scene.noise_snr_db;
    manifest << row.dump() << "\n";
  }
  return manifest_path.string();
}

inline std::vector<SampleRecord> read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot read " + manifest_path);
  std::vector<SampleRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto row = nlohmann::json::parse(line);
    SampleRecord rec;
    rec.id = row.at("id").get<int>();
    rec.seed = row.at("seed").get<std::uint64_t>();
    rec.mixture_path = row.at("mixture").get<std::string>();
    rec.images_path = row.at("images").get<std::string>();
    rec.t60 = row.at("t60").get<double>();
    rec.sir_db = row.at("sir_db").get<std::vector<double>>();
    rec.noise_snr_db = row.at("noise_snr_db").get<double>();
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw std::runtime_error("empty manifest: " + manifest_path);
  return records;
}

// In-memory training view of one sample.
struct LoadedSample {
  std::vector<double> mixture_ref;            // reference channel (rm4)
  std::vector<double> vm_target;              // observed channel at the VM position
  std::vector<double> rm;                     // [2, T] flattened: rm4 then rm6
  std::vector<std::vector<double>> images;   // per source, at the reference mic
  std::int64_t samples = 0;
};

inline LoadedSample load_sample(const std::string& manifest_path, const SampleRecord& rec) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(manifest_path).parent_path();
  const auto mix = wav::read((dir / rec.mixture_path).string());
  const auto imgs = wav::read((dir / rec.images_path).string());
  if (mix.channels() != 3 || imgs.channels() != 3 || mix.samples() != imgs.samples())
    throw std::runtime_error("malformed sample files for id " + std::to_string(rec.id));
  const std::int64_t T = mix.samples();
  LoadedSample s;
  s.samples = T;
  s.mixture_ref.resize(static_cast<std::size_t>(T));
  s.vm_target.resize(static_cast<std::size_t>(T));
  s.rm.resize(static_cast<std::size_t>(2 * T));
  for (std::int64_t t = 0; t < T; ++t) {
    s.mixture_ref[static_cast<std::size_t>(t)] = mix.at(0, t);
    s.vm_target[static_cast<std::size_t>(t)] = mix.at(1, t);
    s.rm[static_cast<std::size_t>(t)] = mix.at(0, t);
    s.rm[static_cast<std::size_t>(T + t)] = mix.at(2, t);
  }
  s.images.resize(3);
  for (int i = 0; i < 3; ++i) {
    s.images[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(T));
    for (std::int64_t t = 0; t < T; ++t)
      s.images[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] = imgs.at(i, t);
  }
  return s;
}

}  // namespace nnvme
