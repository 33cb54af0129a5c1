#pragma once

// Evaluation metrics: projection-based SDR (scale-invariant) and the
// multi-source beamformer SDR with SIR-resolved permutations.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace nnvme {

namespace metricdetail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double clamp_db(double db) { return std::min(std::max(db, -60.0), 60.0); }

// Energy of est's orthogonal projection onto ref.
inline double projection_energy(const std::vector<double>& ref, const std::vector<double>& est,
                                double ref_energy) {
  const double c = dot(est, ref);
  return c * c / ref_energy;
}

}  // namespace metricdetail

// SDR = 10*log10(|z_tgt|^2 / |z_tgt - est|^2) with z_tgt the projection of est
// onto ref; scale-invariant in est, clamped to [-60, 60] dB.
inline double sdr(const std::vector<double>& ref, const std::vector<double>& est) {
  if (ref.size() != est.size()) throw std::invalid_argument("sdr: length mismatch");
  const double ref_energy = metricdetail::dot(ref, ref);
  if (ref_energy == 0.0) throw std::invalid_argument("sdr: all-zero reference");
  const double scale = metricdetail::dot(est, ref) / ref_energy;
  double target = 0.0, distortion = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double zt = scale * ref[i];
    target += zt * zt;
    distortion += (zt - est[i]) * (zt - est[i]);
  }
  if (target == 0.0) return -60.0;  // est orthogonal to ref
  if (distortion == 0.0) return 60.0;
  return metricdetail::clamp_db(10.0 * std::log10(target / distortion));
}

inline double sdr_vm(const std::vector<double>& v, const std::vector<double>& v_hat) {
  return sdr(v, v_hat);
}

struct SdrBfResult {
  double mean_sdr_db = 0.0;
  std::vector<double> per_source_db;
  std::vector<int> permutation;  // permutation[i] = estimate index assigned to ref i
};

// Mean projection SDR over sources; the estimate-to-reference assignment is the
// permutation maximizing the mean output SIR, where each estimate's SIR is the
// energy of its projection onto the assigned reference over the summed energies
// of its projections onto the other references.
inline SdrBfResult sdr_bf(const std::vector<std::vector<double>>& refs,
                          const std::vector<std::vector<double>>& ests) {
  if (refs.size() != ests.size() || refs.empty())
    throw std::invalid_argument("sdr_bf: reference/estimate count mismatch");
  const int I = static_cast<int>(refs.size());

  std::vector<double> ref_energy(static_cast<std::size_t>(I));
  for (int i = 0; i < I; ++i) {
    ref_energy[static_cast<std::size_t>(i)] = metricdetail::dot(refs[static_cast<std::size_t>(i)],
                                                                refs[static_cast<std::size_t>(i)]);
    if (ref_energy[static_cast<std::size_t>(i)] == 0.0)
      throw std::invalid_argument("sdr_bf: all-zero reference");
  }
  // proj[i][j]: energy of estimate j projected onto reference i
  std::vector<std::vector<double>> proj(static_cast<std::size_t>(I),
                                        std::vector<double>(static_cast<std::size_t>(I)));
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < I; ++j)
      proj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          metricdetail::projection_energy(refs[static_cast<std::size_t>(i)],
                                          ests[static_cast<std::size_t>(j)],
                                          ref_energy[static_cast<std::size_t>(i)]);

  std::vector<int> perm(static_cast<std::size_t>(I));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_sir = -1e300;
  do {
    double total_sir = 0.0;
    for (int i = 0; i < I; ++i) {
      const int j = perm[static_cast<std::size_t>(i)];
      double interference = 0.0;
      for (int k = 0; k < I; ++k)
        if (k != i) interference += proj[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      const double target = proj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      total_sir += metricdetail::clamp_db(
          10.0 * std::log10(std::max(target, 1e-300) / std::max(interference, 1e-300)));
    }
    if (total_sir > best_sir) {
      best_sir = total_sir;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  SdrBfResult res;
  res.permutation = best;
  for (int i = 0; i < I; ++i)
    res.per_source_db.push_back(
        sdr(refs[static_cast<std::size_t>(i)],
            ests[static_cast<std::size_t>(best[static_cast<std::size_t>(i)])]));
  res.mean_sdr_db =
      std::accumulate(res.per_source_db.begin(), res.per_source_db.end(), 0.0) /
      static_cast<double>(I);
  return res;
}

}  // namespace nnvme
