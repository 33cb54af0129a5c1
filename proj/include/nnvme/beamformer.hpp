#pragma once

// Mask-based Souden MVDR beamforming over the augmented array [rm, vm, rm]:
// magnitude-ratio masks from a separator's outputs, masked spatial covariance
// estimation, per-frequency weight solves, and differentiable application.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nnvme/complex_ops.hpp"
#include "nnvme/stft.hpp"

namespace nnvme {

struct BfConfig {
  double mask_ceiling = 2.0;
  double mask_epsilon = 1e-8;
  double diag_delta = 1e-6;    // relative diagonal loading on the noise SCM
  double trace_epsilon = 1e-12;  // |tr| below this marks a degenerate source bin
  int ref_channel = 0;
};

// mask(t,f) = min(|sep(t,f)| / (|obs(t,f)| + eps), ceiling); flat [frames*bins]
// per source, matching the masked-SCM weight layout. Channel 0 of each input.
inline std::vector<std::vector<double>> magnitude_ratio_masks(
    const Spectrogram& obs, const std::vector<Spectrogram>& seps, const BfConfig& cfg = {}) {
  std::vector<std::vector<double>> masks;
  masks.reserve(seps.size());
  const std::int64_t Tf = obs.frames();
  const int F = obs.bins();
  for (const auto& sep : seps) {
    if (sep.frames() != Tf || sep.bins() != F)
      throw std::invalid_argument("magnitude_ratio_masks: time-frequency shape mismatch");
    std::vector<double> m(static_cast<std::size_t>(Tf * F));
    for (std::int64_t t = 0; t < Tf; ++t)
      for (int f = 0; f < F; ++f)
        m[static_cast<std::size_t>(t * F + f)] =
            std::min(std::abs(sep.at(0, t, f)) / (std::abs(obs.at(0, t, f)) + cfg.mask_epsilon),
                     cfg.mask_ceiling);
    masks.push_back(std::move(m));
  }
  return masks;
}

struct ScmPair {
  ad::Tensor phi_s;  // [F, C, C, 2]
  ad::Tensor phi_n;
  std::vector<int> fallback_s;  // bins where the mask summed to zero
  std::vector<int> fallback_n;
};

// Phi_S from the source mask, Phi_N from the complement clamp(1 - m, 0, 1).
inline ScmPair estimate_scm(const std::vector<ad::Tensor>& specs, const std::vector<double>& mask) {
  std::vector<double> complement(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    complement[i] = std::min(std::max(1.0 - mask[i], 0.0), 1.0);
  ScmPair out;
  out.phi_s = ad::masked_scm(specs, mask, &out.fallback_s);
  out.phi_n = ad::masked_scm(specs, complement, &out.fallback_n);
  return out;
}

struct MvdrResult {
  ad::Tensor weights;  // [F, C, 2], zero rows at degenerate bins
  std::vector<int> degenerate_bins;
};

// w(f) = (Phi_N^-1 Phi_S u_ref) / tr(Phi_N^-1 Phi_S), differentiable in both
// covariances. Bins with |trace| <= trace_epsilon get zero weights and a flag.
inline MvdrResult mvdr_souden(const ad::Tensor& phi_s, const ad::Tensor& phi_n,
                              const BfConfig& cfg = {}) {
  if (phi_s.shape() != phi_n.shape() || phi_s.shape().size() != 4)
    throw std::invalid_argument("mvdr_souden: covariance shape mismatch");
  const int C = static_cast<int>(phi_s.shape()[1]);
  if (cfg.ref_channel < 0 || cfg.ref_channel >= C)
    throw std::invalid_argument("mvdr_souden: reference channel out of range");
  auto prod = ad::cmatmul(ad::cinverse(ad::diag_load(phi_n, cfg.diag_delta)), phi_s);
  auto numerator = ad::cselect_col(prod, cfg.ref_channel);
  MvdrResult res;
  res.weights = ad::cdiv_bcast(numerator, ad::ctrace(prod), cfg.trace_epsilon,
                               &res.degenerate_bins);
  return res;
}

// X(t,f) = w(f)^H y(t,f) over the augmented channels, then istft to a waveform.
inline ad::Tensor apply_bf(const ad::Tensor& weights, const std::vector<ad::Tensor>& specs,
                           const StftConfig& stft_cfg, std::int64_t out_len) {
  return ad::istft_t(ad::bf_apply(weights, specs), stft_cfg, out_len);
}

}  // namespace nnvme
