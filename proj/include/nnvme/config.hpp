#pragma once

// Run configuration: one JSON file with {data, model, train, eval} sections.
// Every field has a desk-scale default so a minimal config can stay tiny.

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnvme/dataset.hpp"
#include "nnvme/train.hpp"

namespace nnvme {

struct RunConfig {
  DataConfig data;
  TdcnConfig separator;
  TdcnConfig vme;
  TrainConfig train;        // shared optimizer/STFT/BF settings
  int separator_epochs = 10;
  int vme_epochs = 10;
  std::vector<double> eval_alphas{0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0};
  std::vector<std::string> eval_systems{"mixture", "rm2", "rm3", "vm"};
  std::uint64_t seed = 1;
};

namespace configdetail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void parse_tdcn(const nlohmann::json& j, TdcnConfig& cfg) {
  maybe(j, "in_channels", cfg.in_channels);
  maybe(j, "basis", cfg.basis);
  maybe(j, "kernel", cfg.kernel);
  maybe(j, "bottleneck", cfg.bottleneck);
  maybe(j, "hidden", cfg.hidden);
  maybe(j, "conv_kernel", cfg.conv_kernel);
  maybe(j, "blocks_per_repeat", cfg.blocks_per_repeat);
  maybe(j, "repeats", cfg.repeats);
  maybe(j, "heads", cfg.heads);
  cfg.validate();
}

}  // namespace configdetail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using configdetail::maybe;
  RunConfig cfg;
  cfg.separator.in_channels = 1;
  cfg.separator.heads = 3;
  cfg.vme.in_channels = 2;
  cfg.vme.heads = 1;

  if (j.contains("data")) {
    const auto& d = j.at("data");
    maybe(d, "train_count", cfg.data.train_count);
    maybe(d, "dev_count", cfg.data.dev_count);
    maybe(d, "eval_count", cfg.data.eval_count);
    maybe(d, "duration", cfg.data.duration);
    maybe(d, "sample_rate", cfg.data.sample_rate);
    cfg.data.validate();
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    if (m.contains("separator")) configdetail::parse_tdcn(m.at("separator"), cfg.separator);
    if (m.contains("vme")) configdetail::parse_tdcn(m.at("vme"), cfg.vme);
  }
  if (cfg.separator.in_channels != 1 || cfg.separator.heads < 2)
    throw std::invalid_argument("config: separator must be single-input multi-head");
  if (cfg.vme.in_channels != 2 || cfg.vme.heads != 1)
    throw std::invalid_argument("config: vme must map 2 channels to 1 head");

  if (j.contains("train")) {
    const auto& t = j.at("train");
    maybe(t, "separator_epochs", cfg.separator_epochs);
    maybe(t, "vme_epochs", cfg.vme_epochs);
    maybe(t, "learning_rate", cfg.train.learning_rate);
    maybe(t, "clip", cfg.train.clip);
    maybe(t, "alpha", cfg.train.mtl.alpha);
    maybe(t, "loss_floor_db", cfg.train.mtl.loss_floor_db);
    maybe(t, "snr_epsilon", cfg.train.mtl.snr_epsilon);
    if (t.contains("stft")) {
      const auto& s = t.at("stft");
      maybe(s, "frame_length", cfg.train.stft.frame_length);
      maybe(s, "hop", cfg.train.stft.hop);
    }
    if (t.contains("bf")) {
      const auto& b = t.at("bf");
      maybe(b, "mask_ceiling", cfg.train.bf.mask_ceiling);
      maybe(b, "mask_epsilon", cfg.train.bf.mask_epsilon);
      maybe(b, "diag_delta", cfg.train.bf.diag_delta);
      maybe(b, "trace_epsilon", cfg.train.bf.trace_epsilon);
    }
    cfg.train.mtl.validate();
    cfg.train.stft.validate();
    if (cfg.separator_epochs < 0 || cfg.vme_epochs < 0)
      throw std::invalid_argument("config: epochs must be non-negative");
    if (cfg.train.learning_rate <= 0.0)
      throw std::invalid_argument("config: learning_rate must be positive");
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    maybe(e, "alphas", cfg.eval_alphas);
    maybe(e, "systems", cfg.eval_systems);
    for (double a : cfg.eval_alphas)
      if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("config: eval alpha outside [0, 1]");
  }
  maybe(j, "seed", cfg.seed);
  cfg.data.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace nnvme
