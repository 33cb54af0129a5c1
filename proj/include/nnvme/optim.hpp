#pragma once

// Adam with global-norm gradient clipping. Parameters are autodiff leaf
// tensors; updates mutate their value buffers in place between steps.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nnvme/autodiff.hpp"

namespace nnvme {

struct OptimizerState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_threshold = 5.0;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> m;  // first moments, one slab per parameter
  std::vector<std::vector<double>> v;  // second moments
};

inline OptimizerState make_optimizer(const std::vector<ad::Tensor>& params,
                                     double learning_rate = 1e-4, double clip_threshold = 5.0) {
  OptimizerState st;
  st.learning_rate = learning_rate;
  st.clip_threshold = clip_threshold;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (const auto& p : params) {
    st.m.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    st.v.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
  return st;
}

// Scales all gradient slabs so the global L2 norm does not exceed threshold.
// Returns the pre-clip norm.
inline double clip_global_norm(std::vector<std::vector<double>*> grads, double threshold) {
  if (threshold <= 0.0) throw std::invalid_argument("clip_global_norm: threshold must be > 0");
  double sq = 0.0;
  for (const auto* g : grads)
    for (double v : *g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > threshold) {
    const double s = threshold / norm;
    for (auto* g : grads)
      for (double& v : *g) v *= s;
  }
  return norm;
}

// Standard Adam update over the parameters' accumulated gradients, applied
// after global-norm clipping. Gradients are zeroed afterwards. Returns the
// pre-clip gradient norm.
inline double adam_step(OptimizerState& st, std::vector<ad::Tensor>& params) {
  if (params.size() != st.m.size())
    throw std::invalid_argument("adam_step: parameter/state count mismatch");
  std::vector<std::vector<double>*> grads;
  grads.reserve(params.size());
  for (auto& p : params) {
    auto& g = p.shared()->grad;
    if (g.size() != p.shared()->value.size())
      throw std::runtime_error("adam_step: missing gradient (run backward first)");
    for (double v : g)
      if (!std::isfinite(v)) throw std::runtime_error("adam_step: non-finite gradient");
    grads.push_back(&g);
  }
  const double norm = clip_global_norm(grads, st.clip_threshold);

  st.step_count++;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].shared()->value;
    auto& grad = *grads[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * grad[j];
      v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * grad[j] * grad[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] -= st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
    }
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  return norm;
}

}  // namespace nnvme
