#pragma once

// Shared outer-loop plumbing: Adam on the flattened parameters, contraction
// enforcement and deterministic minibatch sampling.

#include <cstdint>
#include <vector>

#include "jiio/baselines.hpp"
#include "jiio/core/rng.hpp"
#include "jiio/layer.hpp"

namespace jiio {

struct TrainConfig {
  int steps = 100;
  std::size_t batch = 8;
  double lr = 1e-3;
  /// Spectral-norm bound re-imposed on W after every update; ≤ 0 disables.
  double gamma = 0.9;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Keep a copy of θ after every step.
  bool record_trajectory = false;
};

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  double aux = 0.0;  // task-specific second column (regularizer, accuracy, ...)
};

class ParameterAdam {
 public:
  ParameterAdam(double lr, double gamma) : opt_(OptimizerState::adam(lr)), gamma_(gamma) {}

  void step(Model& model, const ThetaGradient& g) {
    Vector theta = model.flatten();
    opt_.update(theta, g.flatten());
    model.assign(theta);
    if (gamma_ > 0.0) enforce_contraction(model.layer.params(), gamma_);
  }

 private:
  OptimizerState opt_;
  double gamma_;
};

/// `batch` indices drawn without replacement (or all of them) for one step.
inline std::vector<std::size_t> sample_batch(std::size_t count, std::size_t batch, std::uint64_t seed, int step) {
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  if (batch >= count) return idx;
  SeededRng rng = SeededRng::derive(seed, static_cast<std::uint64_t>(step), 0xba7c);
  for (std::size_t i = 0; i < batch; ++i) std::swap(idx[i], idx[i + rng.below(count - i)]);
  idx.resize(batch);
  return idx;
}

/// Mean of per-item gradients, summed in item order.
inline ThetaGradient mean_gradient(const Model& model, const std::vector<ThetaGradient>& grads) {
  ThetaGradient total = model.zero_gradient();
  for (const auto& g : grads) total += g;
  if (!grads.empty()) total *= 1.0 / static_cast<double>(grads.size());
  return total;
}

}  // namespace jiio
