#pragma once

// Training objectives: waveform SNR loss, permutation-invariant beamformer
// loss, and the multi-task interpolation between them.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "nnvme/autodiff.hpp"

namespace nnvme {

struct MtlConfig {
  double alpha = 0.3;          // weight on the VM-level loss
  double snr_epsilon = 1e-8;   // inside the log ratio
  double loss_floor_db = -60.0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("MtlConfig: alpha must lie in [0, 1]");
    if (snr_epsilon <= 0.0) throw std::invalid_argument("MtlConfig: snr_epsilon must be > 0");
  }
};

// -10*log10(|ref|^2 / (|ref - est|^2 + eps)), clamped below at floor_db.
// Lower is better; est == ref hits the floor.
inline ad::Tensor snr_loss(const ad::Tensor& ref, const ad::Tensor& est,
                           double floor_db = -60.0, double eps = 1e-8) {
  if (ref.shape() != est.shape()) throw std::invalid_argument("snr_loss: shape mismatch");
  double ref_energy = 0.0;
  for (double v : ref.value()) ref_energy += v * v;
  if (ref_energy == 0.0) throw std::invalid_argument("snr_loss: all-zero reference");

  auto diff = ad::sub(ref, est);
  auto res_energy = ad::sum(ad::mul(diff, diff));
  auto num = ad::sum(ad::mul(ref, ref));
  const double k = 10.0 / std::log(10.0);
  // -10*log10(num/(den+eps)) = k*(log(den+eps) - log(num))
  auto loss = ad::sub(ad::scale(ad::log(ad::add_const(res_energy, eps)), k),
                      ad::scale(ad::log(num), k));
  // max(loss, floor) = floor + relu(loss - floor), keeps the graph differentiable
  return ad::add_const(ad::relu(ad::add_const(loss, -floor_db)), floor_db);
}

inline ad::Tensor vm_loss(const ad::Tensor& v, const ad::Tensor& v_hat,
                          const MtlConfig& cfg = {}) {
  return snr_loss(v, v_hat, cfg.loss_floor_db, cfg.snr_epsilon);
}

struct PitResult {
  ad::Tensor loss;               // sum over sources under the best assignment
  std::vector<int> permutation;  // permutation[i] = estimate index assigned to ref i
};

// Minimum over all I! assignments of sum_i snr_loss(ref_i, est_perm[i]).
// Gradient flows only through the winning branch; ties go to the
// lexicographically smallest permutation.
inline PitResult pit_bf_loss(const std::vector<ad::Tensor>& refs,
                             const std::vector<ad::Tensor>& ests,
                             const MtlConfig& cfg = {}) {
  if (refs.size() != ests.size() || refs.empty())
    throw std::invalid_argument("pit_bf_loss: reference/estimate count mismatch");
  const int I = static_cast<int>(refs.size());

  std::vector<std::vector<ad::Tensor>> pair(static_cast<std::size_t>(I));
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < I; ++j)
      pair[static_cast<std::size_t>(i)].push_back(
          snr_loss(refs[static_cast<std::size_t>(i)], ests[static_cast<std::size_t>(j)],
                   cfg.loss_floor_db, cfg.snr_epsilon));

  std::vector<int> perm(static_cast<std::size_t>(I));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_total = 0.0;
  bool first = true;
  do {
    double total = 0.0;
    for (int i = 0; i < I; ++i)
      total += pair[static_cast<std::size_t>(i)][static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])].item();
    if (first || total < best_total) {  // strict < keeps the lexicographically first tie
      best_total = total;
      best = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  ad::Tensor total = pair[0][static_cast<std::size_t>(best[0])];
  for (int i = 1; i < I; ++i)
    total = ad::add(total, pair[static_cast<std::size_t>(i)][static_cast<std::size_t>(best[static_cast<std::size_t>(i)])]);
  return {total, best};
}

// alpha*l_vm + (1-alpha)*l_bf
inline ad::Tensor mtl_loss(const MtlConfig& cfg, const ad::Tensor& l_vm, const ad::Tensor& l_bf) {
  cfg.validate();
  return ad::add(ad::scale(l_vm, cfg.alpha), ad::scale(l_bf, 1.0 - cfg.alpha));
}

}  // namespace nnvme
