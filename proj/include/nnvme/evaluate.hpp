#pragma once

// Evaluation sweep: per-sample SDR metrics for the unprocessed mixture, the
// 2- and 3-channel real-microphone beamformers, and the virtual-microphone
// beamformer, written as deterministic CSV rows plus aggregate means.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "nnvme/beamformer.hpp"
#include "nnvme/dataset.hpp"
#include "nnvme/metrics.hpp"
#include "nnvme/train.hpp"

namespace nnvme {

struct EvalRow {
  std::string system;
  int sample_id = 0;
  double alpha = std::nan("");   // NaN for systems without a VM model
  double sdr_vm = std::nan("");  // NaN for beamformers over real channels only
  double sdr_bf = 0.0;
  std::vector<int> permutation;
  double t60 = 0.0;
  double sir_mean = 0.0;
};

namespace evaldetail {

// Value-only mask-based MVDR over an arbitrary channel list; reference is
// channel 0. Returns one estimate per source mask.
inline std::vector<std::vector<double>> beamform_channels(
    const std::vector<std::vector<double>>& channels,
    const std::vector<std::vector<double>>& masks, const TrainConfig& cfg, std::int64_t T) {
  std::vector<ad::Tensor> specs;
  for (const auto& ch : channels) specs.push_back(ad::stft_t(traindetail::leaf1d(ch), cfg.stft));
  std::vector<std::vector<double>> outs;
  for (const auto& mask : masks) {
    auto scm = estimate_scm(specs, mask);
    auto res = mvdr_souden(scm.phi_s, scm.phi_n, cfg.bf);
    outs.push_back(apply_bf(res.weights, specs, cfg.stft, T).value());
  }
  return outs;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace evaldetail

// system: "mixture", "rm2", "rm3", or "vm" (vm requires a model and an alpha tag).
inline EvalRow evaluate_sample(const std::string& system, const SampleRecord& rec,
                               const LoadedSample& s, const TdcnParams& frozen_sep,
                               const TdcnParams* vme, double alpha, const TrainConfig& cfg,
                               const std::vector<std::vector<double>>* cached_masks = nullptr) {
  const std::int64_t T = s.samples;
  EvalRow row;
  row.system = system;
  row.sample_id = rec.id;
  row.t60 = rec.t60;
  row.sir_mean = 0.0;
  for (double v : rec.sir_db) row.sir_mean += v;
  if (!rec.sir_db.empty()) row.sir_mean /= static_cast<double>(rec.sir_db.size());

  std::vector<double> rm4(s.rm.begin(), s.rm.begin() + T);
  std::vector<double> rm6(s.rm.begin() + T, s.rm.end());

  std::vector<std::vector<double>> ests;
  if (system == "mixture") {
    ests.assign(3, s.mixture_ref);
  } else {
    const auto masks = cached_masks ? *cached_masks : separator_masks(frozen_sep, s, cfg);
    if (system == "rm2") {
      ests = evaldetail::beamform_channels({rm4, rm6}, masks, cfg, T);
    } else if (system == "rm3") {
      ests = evaldetail::beamform_channels({rm4, s.vm_target, rm6}, masks, cfg, T);
    } else if (system == "vm") {
      if (!vme) throw std::runtime_error("system vm: missing model checkpoint");
      auto v_hat = vme_forward(*vme, ad::Tensor::leaf({2, T}, s.rm));
      row.alpha = alpha;
      row.sdr_vm = sdr_vm(s.vm_target, v_hat.value());
      ests = evaldetail::beamform_channels({rm4, v_hat.value(), rm6}, masks, cfg, T);
    } else {
      throw std::invalid_argument("unknown system: " + system);
    }
  }
  const auto bf = sdr_bf(s.images, ests);
  row.sdr_bf = bf.mean_sdr_db;
  row.permutation = bf.permutation;
  return row;
}

inline void write_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "system,sample_id,alpha,sdr_vm,sdr_bf,permutation,t60,sir\n";
  for (const auto& r : rows) {
    std::string perm;
    for (std::size_t i = 0; i < r.permutation.size(); ++i)
      perm += (i ? "|" : "") + std::to_string(r.permutation[i]);
    out << r.system << ',' << r.sample_id << ',' << evaldetail::format_double(r.alpha) << ','
        << evaldetail::format_double(r.sdr_vm) << ',' << evaldetail::format_double(r.sdr_bf)
        << ',' << perm << ',' << evaldetail::format_double(r.t60) << ','
        << evaldetail::format_double(r.sir_mean) << "\n";
  }
}

struct SystemSummary {
  std::string system;
  double alpha = std::nan("");
  double mean_sdr_vm = std::nan("");
  double mean_sdr_bf = 0.0;
  int count = 0;
};

inline std::vector<SystemSummary> summarize(const std::vector<EvalRow>& rows) {
  std::map<std::pair<std::string, double>, SystemSummary> acc;  // keyed (system, alpha)
  std::vector<std::pair<std::string, double>> order;
  for (const auto& r : rows) {
    const double key_alpha = std::isnan(r.alpha) ? -1.0 : r.alpha;
    const auto key = std::make_pair(r.system, key_alpha);
    auto it = acc.find(key);
    if (it == acc.end()) {
      SystemSummary s;
      s.system = r.system;
      s.alpha = r.alpha;
      it = acc.emplace(key, s).first;
      order.push_back(key);
    }
    auto& s = it->second;
    s.count++;
    s.mean_sdr_bf += r.sdr_bf;
    if (!std::isnan(r.sdr_vm)) s.mean_sdr_vm = (std::isnan(s.mean_sdr_vm) ? 0.0 : s.mean_sdr_vm) + r.sdr_vm;
  }
  std::vector<SystemSummary> out;
  for (const auto& key : order) {
    auto s = acc.at(key);
    s.mean_sdr_bf /= static_cast<double>(s.count);
    if (!std::isnan(s.mean_sdr_vm)) s.mean_sdr_vm /= static_cast<double>(s.count);
    out.push_back(s);
  }
  return out;
}

}  // namespace nnvme
