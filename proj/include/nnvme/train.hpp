#pragma once

// Two-stage training: a PIT-trained separator, then the virtual-microphone
// estimator optimized under the interpolated VM/BF objective with the
// separator frozen. Steps are deterministic given the config seed; epoch
// shuffles draw from per-epoch derived seeds so resuming reproduces the run.

#include <chrono>
#include <cmath>
#include <ostream>
#include <unordered_map>
#include <functional>
#include <vector>

#include "json.hpp"
#include "nnvme/beamformer.hpp"
#include "nnvme/dataset.hpp"
#include "nnvme/losses.hpp"
#include "nnvme/metrics.hpp"
#include "nnvme/optim.hpp"
#include "nnvme/tdcn.hpp"

namespace nnvme {

struct TrainConfig {
  int epochs = 10;
  double learning_rate = 1e-4;
  double clip = 5.0;
  std::uint64_t seed = 1;
  MtlConfig mtl;
  StftConfig stft;
  BfConfig bf;
};

namespace traindetail {

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::derive(seed, 7000 + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_u64() % i)]);
  return order;
}

inline ad::Tensor leaf1d(const std::vector<double>& v) {
  return ad::Tensor::leaf({static_cast<std::int64_t>(v.size())}, v);
}

inline MultichannelWave wave_of(const std::vector<double>& v, int fs) {
  MultichannelWave w(1, static_cast<std::int64_t>(v.size()), fs);
  for (std::int64_t t = 0; t < w.samples(); ++t) w.at(0, t) = v[static_cast<std::size_t>(t)];
  return w;
}

}  // namespace traindetail

// ---- separator ----

// One PIT step on a single mixture; returns the loss value.
inline double separator_step(TdcnParams& sep, OptimizerState& opt, const LoadedSample& s,
                             const TrainConfig& cfg) {
  const std::int64_t T = s.samples;
  auto mix = ad::Tensor::leaf({1, T}, s.mixture_ref);
  auto outs = separator_forward(sep, mix);
  std::vector<ad::Tensor> refs;
  for (const auto& img : s.images) refs.push_back(ad::Tensor::leaf({1, T}, img));
  auto res = pit_bf_loss(refs, outs, cfg.mtl);
  const double loss = res.loss.item();
  if (!std::isfinite(loss)) throw std::runtime_error("separator training diverged (non-finite loss)");
  res.loss.backward();
  adam_step(opt, sep.all);
  return loss;
}

inline double separator_eval_loss(const TdcnParams& sep, const LoadedSample& s,
                                  const TrainConfig& cfg) {
  const std::int64_t T = s.samples;
  auto outs = separator_forward(sep, ad::Tensor::leaf({1, T}, s.mixture_ref));
  std::vector<ad::Tensor> refs;
  for (const auto& img : s.images) refs.push_back(ad::Tensor::leaf({1, T}, img));
  return pit_bf_loss(refs, outs, cfg.mtl).loss.item();
}

// Trains in place, appending one JSON line per epoch to `log` when non-null.
inline void train_separator(TdcnParams& sep, OptimizerState& opt,
                            const std::string& train_manifest,
                            const std::vector<SampleRecord>& train_recs,
                            const std::string& dev_manifest,
                            const std::vector<SampleRecord>& dev_recs, const TrainConfig& cfg,
                            std::ostream* log, int start_epoch = 0,
                            const std::function<void(int)>& after_epoch = {}) {
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = traindetail::epoch_order(train_recs.size(), cfg.seed, epoch);
    double train_loss = 0.0;
    for (std::size_t k : order)
      train_loss += separator_step(sep, opt, load_sample(train_manifest, train_recs[k]), cfg);
    train_loss /= static_cast<double>(order.size());
    double dev_loss = 0.0;
    for (const auto& rec : dev_recs)
      dev_loss += separator_eval_loss(sep, load_sample(dev_manifest, rec), cfg);
    dev_loss /= static_cast<double>(dev_recs.size());
    if (log) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      nlohmann::json row{{"stage", "separator"}, {"epoch", epoch},       {"train_pit_loss", train_loss},
                         {"dev_pit_loss", dev_loss}, {"wall_s", wall}};
      *log << row.dump() << "\n" << std::flush;
    }
    if (after_epoch) after_epoch(epoch);
  }
}

// ---- virtual microphone estimator ----

// Ratio masks from the frozen separator on the reference-channel mixture.
inline std::vector<std::vector<double>> separator_masks(const TdcnParams& frozen_sep,
                                                        const LoadedSample& s,
                                                        const TrainConfig& cfg, int fs = 8000) {
  const std::int64_t T = s.samples;
  auto outs = separator_forward(frozen_sep, ad::Tensor::leaf({1, T}, s.mixture_ref));
  const auto obs = stft(traindetail::wave_of(s.mixture_ref, fs), cfg.stft);
  std::vector<Spectrogram> sep_specs;
  for (const auto& o : outs) sep_specs.push_back(stft(traindetail::wave_of(o.value(), fs), cfg.stft));
  return magnitude_ratio_masks(obs, sep_specs, cfg.bf);
}

// Beamformed estimates for all sources from the augmented array [rm4, v, rm6].
// Differentiable in `vm` (pass the VME output to train, a constant to evaluate).
inline std::vector<ad::Tensor> beamform_sources(const ad::Tensor& vm, const LoadedSample& s,
                                                const std::vector<std::vector<double>>& masks,
                                                const TrainConfig& cfg) {
  const std::int64_t T = s.samples;
  std::vector<double> rm4(s.rm.begin(), s.rm.begin() + T);
  std::vector<double> rm6(s.rm.begin() + T, s.rm.end());
  std::vector<ad::Tensor> specs{ad::stft_t(traindetail::leaf1d(rm4), cfg.stft),
                                ad::stft_t(ad::reshape(vm, {T}), cfg.stft),
                                ad::stft_t(traindetail::leaf1d(rm6), cfg.stft)};
  std::vector<ad::Tensor> outs;
  for (const auto& mask : masks) {
    auto scm = estimate_scm(specs, mask);
    auto res = mvdr_souden(scm.phi_s, scm.phi_n, cfg.bf);
    outs.push_back(apply_bf(res.weights, specs, cfg.stft, T));
  }
  return outs;
}

inline ad::Tensor bf_loss(const ad::Tensor& vm, const LoadedSample& s,
                          const std::vector<std::vector<double>>& masks, const TrainConfig& cfg) {
  auto outs = beamform_sources(vm, s, masks, cfg);
  std::vector<ad::Tensor> refs;
  for (const auto& img : s.images) refs.push_back(traindetail::leaf1d(img));
  return pit_bf_loss(refs, outs, cfg.mtl).loss;
}

struct VmeStepResult {
  double l_vm = 0.0;
  double l_bf = 0.0;
  double grad_norm = 0.0;
};

// One interpolated-objective step. At the endpoints the inactive branch is
// evaluated on a detached copy of the estimate, so it is logged but never
// contributes gradient (alpha = 1 optimizes the VM loss alone, alpha = 0 the
// BF loss alone).
inline VmeStepResult vme_step(TdcnParams& vme, const TdcnParams& frozen_sep, OptimizerState& opt,
                              const LoadedSample& s, const TrainConfig& cfg,
                              const std::vector<std::vector<double>>* cached_masks = nullptr) {
  const std::int64_t T = s.samples;
  const double alpha = cfg.mtl.alpha;
  cfg.mtl.validate();
  auto v_hat = vme_forward(vme, ad::Tensor::leaf({2, T}, s.rm));
  auto v_ref = ad::Tensor::leaf({1, T}, s.vm_target);
  const auto masks = cached_masks ? *cached_masks : separator_masks(frozen_sep, s, cfg);
  auto detached = [&]() { return ad::Tensor::leaf({1, T}, v_hat.value()); };

  VmeStepResult res;
  ad::Tensor loss;
  if (alpha == 1.0) {
    auto l_vm = snr_loss(v_ref, v_hat, cfg.mtl.loss_floor_db, cfg.mtl.snr_epsilon);
    res.l_vm = l_vm.item();
    res.l_bf = bf_loss(detached(), s, masks, cfg).item();
    loss = l_vm;
  } else if (alpha == 0.0) {
    auto l_bf = bf_loss(v_hat, s, masks, cfg);
    res.l_bf = l_bf.item();
    res.l_vm = snr_loss(v_ref, detached(), cfg.mtl.loss_floor_db, cfg.mtl.snr_epsilon).item();
    loss = l_bf;
  } else {
    auto l_vm = snr_loss(v_ref, v_hat, cfg.mtl.loss_floor_db, cfg.mtl.snr_epsilon);
    auto l_bf = bf_loss(v_hat, s, masks, cfg);
    res.l_vm = l_vm.item();
    res.l_bf = l_bf.item();
    loss = mtl_loss(cfg.mtl, l_vm, l_bf);
  }
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("vme training diverged (non-finite loss)");
  loss.backward();
  res.grad_norm = adam_step(opt, vme.all);
  return res;
}

// Reference single-objective loops for the interpolation endpoints: straight
// VM-loss (or BF-loss) training with no interpolation code in the path.
inline void vme_step_vm_only(TdcnParams& vme, OptimizerState& opt, const LoadedSample& s,
                             const TrainConfig& cfg) {
  const std::int64_t T = s.samples;
  auto v_hat = vme_forward(vme, ad::Tensor::leaf({2, T}, s.rm));
  auto loss = snr_loss(ad::Tensor::leaf({1, T}, s.vm_target), v_hat, cfg.mtl.loss_floor_db,
                       cfg.mtl.snr_epsilon);
  loss.backward();
  adam_step(opt, vme.all);
}

inline void vme_step_bf_only(TdcnParams& vme, const TdcnParams& frozen_sep, OptimizerState& opt,
                             const LoadedSample& s, const TrainConfig& cfg) {
  const std::int64_t T = s.samples;
  auto v_hat = vme_forward(vme, ad::Tensor::leaf({2, T}, s.rm));
  auto loss = bf_loss(v_hat, s, separator_masks(frozen_sep, s, cfg), cfg);
  loss.backward();
  adam_step(opt, vme.all);
}

struct VmeEval {
  double l_vm = 0.0;
  double l_bf = 0.0;
};

inline VmeEval vme_eval_losses(const TdcnParams& vme, const TdcnParams& frozen_sep,
                               const LoadedSample& s, const TrainConfig& cfg,
                               const std::vector<std::vector<double>>* cached_masks = nullptr) {
  const std::int64_t T = s.samples;
  auto v_hat = vme_forward(vme, ad::Tensor::leaf({2, T}, s.rm));
  auto detached = ad::Tensor::leaf({1, T}, v_hat.value());
  VmeEval ev;
  ev.l_vm = snr_loss(ad::Tensor::leaf({1, T}, s.vm_target), detached, cfg.mtl.loss_floor_db,
                     cfg.mtl.snr_epsilon)
                .item();
  ev.l_bf = bf_loss(detached, s, cached_masks ? *cached_masks : separator_masks(frozen_sep, s, cfg),
                    cfg)
                .item();
  return ev;
}

inline void train_vme(TdcnParams& vme, const TdcnParams& frozen_sep, OptimizerState& opt,
                      const std::string& train_manifest,
                      const std::vector<SampleRecord>& train_recs,
                      const std::string& dev_manifest, const std::vector<SampleRecord>& dev_recs,
                      const TrainConfig& cfg, std::ostream* log, int start_epoch = 0,
                      const std::function<void(int)>& after_epoch = {}) {
  // The separator is frozen, so its masks per sample are constants of the run;
  // compute them once and reuse across epochs.
  std::unordered_map<int, std::vector<std::vector<double>>> train_masks, dev_masks;
  auto masks_for = [&](std::unordered_map<int, std::vector<std::vector<double>>>& cache,
                       const SampleRecord& rec,
                       const LoadedSample& s) -> const std::vector<std::vector<double>>* {
    auto it = cache.find(rec.id);
    if (it == cache.end())
      it = cache.emplace(rec.id, separator_masks(frozen_sep, s, cfg)).first;
    return &it->second;
  };
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = traindetail::epoch_order(train_recs.size(), cfg.seed, epoch);
    double l_vm = 0.0, l_bf = 0.0, gnorm = 0.0;
    for (std::size_t k : order) {
      const auto s = load_sample(train_manifest, train_recs[k]);
      const auto res =
          vme_step(vme, frozen_sep, opt, s, cfg, masks_for(train_masks, train_recs[k], s));
      l_vm += res.l_vm;
      l_bf += res.l_bf;
      gnorm += res.grad_norm;
    }
    const double n = static_cast<double>(order.size());
    double dev_vm = 0.0, dev_bf = 0.0;
    for (const auto& rec : dev_recs) {
      const auto s = load_sample(dev_manifest, rec);
      const auto ev = vme_eval_losses(vme, frozen_sep, s, cfg, masks_for(dev_masks, rec, s));
      dev_vm += ev.l_vm;
      dev_bf += ev.l_bf;
    }
    const double m = static_cast<double>(dev_recs.size());
    if (log) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      nlohmann::json row{{"stage", "vme"},          {"epoch", epoch},
                         {"alpha", cfg.mtl.alpha},  {"train_l_vm", l_vm / n},
                         {"train_l_bf", l_bf / n},  {"dev_l_vm", dev_vm / m},
                         {"dev_l_bf", dev_bf / m},  {"grad_norm", gnorm / n},
                         {"wall_s", wall}};
      *log << row.dump() << "\n" << std::flush;
    }
    if (after_epoch) after_epoch(epoch);
  }
}

}  // namespace nnvme
