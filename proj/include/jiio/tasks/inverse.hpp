#pragma once

// Inverse problems with a learned DEQ prior: recover y from an observation
// ŷ = Ay (+ noise) by fitting h(z*(x)) through the measurement operator.

#include <vector>

#include "jiio/tasks/generative.hpp"

namespace jiio {

struct InverseResult {
  Vector reconstruction;  // h(z*) in the clean domain
  Vector x;
  double cost = 0.0;
  SolverTrace trace;
};

/// minimize ‖ŷ − A h(z)‖² s.t. z = f(z, x), returning the full reconstruction.
inline InverseResult solve_inverse_unsup(const Model& model, const Vector& observed, const MeasurementOperator& op,
                                         const JiioConfig& cfg = latent_eval_config()) {
  check_same_size(op.dim(), model.output_dim(), "measurement operator vs model output");
  LatentFit f = fit_latent_problem(model, latent_problem(model, observed, op), cfg);
  return {std::move(f.reconstruction), std::move(f.x), f.cost, std::move(f.trace)};
}

/// Per-item operator. Masks are re-drawn per item at a seeded random window
/// position when `random_window` is set.
struct OperatorSpec {
  MeasurementOperator::Kind kind = MeasurementOperator::Kind::kIdentity;
  std::size_t height = 8, width = 8;
  std::size_t window = 3;
  std::size_t row = 0, col = 0;
  bool random_window = true;
  double sigma = 0.0;

  MeasurementOperator make(SeededRng& rng) const {
    switch (kind) {
      case MeasurementOperator::Kind::kIdentity: return MeasurementOperator::identity(height * width);
      case MeasurementOperator::Kind::kNoisyIdentity: return MeasurementOperator::noisy_identity(height * width, sigma);
      case MeasurementOperator::Kind::kMask: {
        std::size_t r = row, c = col;
        if (random_window) {
          r = rng.below(height - window + 1);
          c = rng.below(width - window + 1);
        }
        return MeasurementOperator::mask(height, width, r, c, window);
      }
    }
    return MeasurementOperator::identity(height * width);
  }
};

/// Observation ŷ of a clean item under `op` (noise only for NoisyIdentity).
inline Vector observe(const MeasurementOperator& op, const Vector& clean, SeededRng& rng) {
  return op.corrupt(clean, rng);
}

/// Supervised training: the inner problem only sees ‖Aŷ − Ah(z)‖², the outer
/// loss compares h(z*) with the clean item, so the gradient goes through the
/// general backward.
inline TrainResult train_inverse_sup(const Dataset& data, const OperatorSpec& spec, Model model, GenerativeConfig cfg) {
  require(!data.empty(), ErrorCode::kInvalidArgument, "train_inverse_sup on an empty dataset");
  check_same_size(data.dim(), model.output_dim(), "dataset vs model output");
  cfg.backward = BackwardKind::kGeneral;
  TrainResult result;
  ParameterAdam adam(cfg.train.lr, cfg.train.gamma);
  for (int step = 0; step < cfg.train.steps; ++step) {
    const auto batch = sample_batch(data.size(), cfg.train.batch, cfg.train.seed, step);
    std::vector<ItemGradient> items(batch.size());
    parallel_for(batch.size(), cfg.train.threads, [&](std::size_t i) {
      SeededRng rng = SeededRng::derive(cfg.train.seed, static_cast<std::uint64_t>(step), batch[i] + 1);
      const Vector& y = data.items[batch[i]];
      const MeasurementOperator op = spec.make(rng);
      const Vector obs = observe(op, y, rng);
      const OuterLoss outer = OuterLoss::custom_loss({LossKind::kSquaredError, y, std::nullopt});
      items[i] = detail::generative_item(model, latent_problem(model, obs, op), y, cfg, outer, rng);
    });
    std::vector<ThetaGradient> grads;
    StepMetrics m{step, 0.0, 0.0};
    for (auto& it : items) {
      m.loss += it.mse / static_cast<double>(items.size());
      m.aux += it.reg / static_cast<double>(items.size());
      grads.push_back(std::move(it.grad));
    }
    adam.step(model, mean_gradient(model, grads));
    result.metrics.push_back(m);
    if (cfg.train.record_trajectory) result.trajectory.push_back(model.flatten());
  }
  result.model = std::move(model);
  return result;
}

}  // namespace jiio
