#pragma once

// Versioned binary checkpoint: magic + version, a JSON metadata blob (model
// config, training progress, anything the caller adds), then the parameter
// values and Adam moments as little-endian float64 slabs. Loading restores
// bit-identical training state.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnvme/optim.hpp"
#include "nnvme/tdcn.hpp"

namespace nnvme {

namespace ckptdetail {

constexpr char kMagic[8] = {'N', 'V', 'M', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_slab(std::ostream& out, const std::vector<double>& v) {
  put_u64(out, v.size());
  for (double x : v) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64(out, bits);
  }
}

inline std::vector<double> get_slab(std::istream& in) {
  std::vector<double> v(get_u64(in));
  for (auto& x : v) {
    const std::uint64_t bits = get_u64(in);
    std::memcpy(&x, &bits, 8);
  }
  return v;
}

}  // namespace ckptdetail

inline nlohmann::json tdcn_config_json(const TdcnConfig& cfg) {
  return {{"in_channels", cfg.in_channels}, {"basis", cfg.basis},     {"kernel", cfg.kernel},
          {"bottleneck", cfg.bottleneck},   {"hidden", cfg.hidden},   {"conv_kernel", cfg.conv_kernel},
          {"blocks_per_repeat", cfg.blocks_per_repeat},               {"repeats", cfg.repeats},
          {"heads", cfg.heads}};
}

inline TdcnConfig tdcn_config_from_json(const nlohmann::json& j) {
  TdcnConfig cfg;
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.basis = j.at("basis").get<int>();
  cfg.kernel = j.at("kernel").get<int>();
  cfg.bottleneck = j.at("bottleneck").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.conv_kernel = j.at("conv_kernel").get<int>();
  cfg.blocks_per_repeat = j.at("blocks_per_repeat").get<int>();
  cfg.repeats = j.at("repeats").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.validate();
  return cfg;
}

// meta must carry "model" (the TdcnConfig); callers add epoch, alpha, etc.
inline void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                            const TdcnParams& params, const OptimizerState* opt = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(ckptdetail::kMagic, 8);
  ckptdetail::put_u64(out, ckptdetail::kVersion);
  const std::string meta_str = meta.dump();
  ckptdetail::put_u64(out, meta_str.size());
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  ckptdetail::put_u64(out, params.all.size());
  for (const auto& p : params.all) ckptdetail::put_slab(out, p.value());

  ckptdetail::put_u64(out, opt ? 1 : 0);
  if (opt) {
    ckptdetail::put_u64(out, static_cast<std::uint64_t>(opt->step_count));
    std::uint64_t lr_bits;
    std::memcpy(&lr_bits, &opt->learning_rate, 8);
    ckptdetail::put_u64(out, lr_bits);
    std::uint64_t clip_bits;
    std::memcpy(&clip_bits, &opt->clip_threshold, 8);
    ckptdetail::put_u64(out, clip_bits);
    ckptdetail::put_u64(out, opt->m.size());
    for (const auto& s : opt->m) ckptdetail::put_slab(out, s);
    for (const auto& s : opt->v) ckptdetail::put_slab(out, s);
  }
  if (!out) throw std::runtime_error("write failed for checkpoint " + path);
}

struct LoadedCheckpoint {
  nlohmann::json meta;
  TdcnParams params;
  OptimizerState opt;
  bool has_optimizer = false;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, ckptdetail::kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint64_t version = ckptdetail::get_u64(in);
  if (version != ckptdetail::kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::string meta_str(ckptdetail::get_u64(in), '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  LoadedCheckpoint ck;
  ck.meta = nlohmann::json::parse(meta_str);
  const TdcnConfig cfg = tdcn_config_from_json(ck.meta.at("model"));
  Rng scratch(0);  // values are overwritten below; the init draw is discarded
  ck.params = make_tdcn(cfg, scratch);
  const std::uint64_t count = ckptdetail::get_u64(in);
  if (count != ck.params.all.size())
    throw std::runtime_error("checkpoint parameter count mismatch in " + path);
  for (auto& p : ck.params.all) {
    auto slab = ckptdetail::get_slab(in);
    if (slab.size() != p.value().size())
      throw std::runtime_error("checkpoint parameter shape mismatch in " + path);
    p.value() = std::move(slab);
  }

  if (ckptdetail::get_u64(in) != 0) {
    ck.has_optimizer = true;
    ck.opt.step_count = static_cast<std::int64_t>(ckptdetail::get_u64(in));
    std::uint64_t bits = ckptdetail::get_u64(in);
    std::memcpy(&ck.opt.learning_rate, &bits, 8);
    bits = ckptdetail::get_u64(in);
    std::memcpy(&ck.opt.clip_threshold, &bits, 8);
    const std::uint64_t slabs = ckptdetail::get_u64(in);
    if (slabs != ck.params.all.size())
      throw std::runtime_error("checkpoint optimizer state mismatch in " + path);
    ck.opt.m.resize(slabs);
    ck.opt.v.resize(slabs);
    for (auto& s : ck.opt.m) s = ckptdetail::get_slab(in);
    for (auto& s : ck.opt.v) s = ckptdetail::get_slab(in);
  }
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  return ck;
}

// Turns a model into a frozen inference-only copy: gradients never flow into it.
inline void freeze(TdcnParams& params) {
  for (auto& p : params.all) {
    p.shared()->requires_grad = false;
    p.shared()->is_param = false;
  }
}

}  // namespace nnvme
