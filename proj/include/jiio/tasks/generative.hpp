#pragma once

// Generative modelling through latent inference: θ is trained so that every
// data item is reachable as h(z*(x)) for an optimized latent x.

#include <cmath>
#include <optional>
#include <vector>

#include "jiio/baselines.hpp"
#include "jiio/core/parallel.hpp"
#include "jiio/jiio.hpp"
#include "jiio/outer.hpp"
#include "jiio/tasks/data.hpp"
#include "jiio/tasks/metrics.hpp"
#include "jiio/tasks/training.hpp"

namespace jiio {

enum class BackwardKind { kReuse, kGeneral };

struct GenerativeConfig {
  TrainConfig train;
  JiioConfig jiio;  // 40-iteration training budget by default
  /// Jacobian-regularizer weight and probe count.
  double lambda = 0.0;
  int hutchinson_samples = 2;
  BackwardKind backward = BackwardKind::kReuse;
};

struct TrainResult {
  Model model;
  std::vector<StepMetrics> metrics;   // loss = batch reconstruction MSE, aux = regularizer
  std::vector<Vector> trajectory;     // θ after each step when requested
};

/// Latent-fitting problem for target y: minimize ‖A(y − h(z*(x)))‖² over x.
inline InputOptProblem latent_problem(const Model& model, const Vector& y,
                                      std::optional<MeasurementOperator> op = std::nullopt) {
  return {model.layer, model.head, {LossKind::kSquaredError, y, std::move(op)}, ConstraintSet::unconstrained(),
          Vector(model.input_dim(), 0.0)};
}

struct ItemGradient {
  ThetaGradient grad;
  double mse = 0.0;
  double reg = 0.0;
};

namespace detail {

/// One item of a generative / inverse training step. The outer loss is the
/// inner loss for reuse, or `outer` for the general backward.
inline ItemGradient generative_item(const Model& model, const InputOptProblem& p, const Vector& clean,
                                    const GenerativeConfig& cfg, const OuterLoss& outer, SeededRng& rng) {
  const JiioResult r = jiio_solve(p, cfg.jiio);
  if (r.trace.non_finite || !all_finite(r.v)) throw Error(ErrorCode::kNonFinite, "JIIO diverged during training");
  ItemGradient out;
  out.grad = cfg.backward == BackwardKind::kReuse ? grad_theta_reuse(p, r.v) : grad_theta_general(p, r.v, outer);
  const AugmentedState s = unpack_state(p, r.v);
  out.mse = mean_squared_error(clean, model.head.apply(s.z));
  if (cfg.lambda > 0.0) {
    // The regularizer is taken at a random iterate of the solve.
    const std::size_t pick = rng.below(r.trace.iterates.size());
    const AugmentedState at = unpack_state(p, r.trace.iterates[pick]);
    const HutchinsonResult h = hutchinson_reg(model.layer, at.z, at.x, rng, cfg.hutchinson_samples);
    out.grad.add_layer(h.grad, cfg.lambda);
    out.reg = h.estimate;
  }
  return out;
}

}  // namespace detail

/// Minibatch Adam on θ. Each item is solved jointly for (z, μ, x) and the
/// outer gradient re-uses the converged adjoint.
inline TrainResult train_generative(const Dataset& data, Model model, const GenerativeConfig& cfg) {
  require(!data.empty(), ErrorCode::kInvalidArgument, "train_generative on an empty dataset");
  check_same_size(data.dim(), model.output_dim(), "dataset vs model output");
  TrainResult result;
  ParameterAdam adam(cfg.train.lr, cfg.train.gamma);
  for (int step = 0; step < cfg.train.steps; ++step) {
    const auto batch = sample_batch(data.size(), cfg.train.batch, cfg.train.seed, step);
    std::vector<ItemGradient> items(batch.size());
    parallel_for(batch.size(), cfg.train.threads, [&](std::size_t i) {
      SeededRng rng = SeededRng::derive(cfg.train.seed, static_cast<std::uint64_t>(step), batch[i] + 1);
      const Vector& y = data.items[batch[i]];
      items[i] = detail::generative_item(model, latent_problem(model, y), y, cfg, OuterLoss::same_as_inner(), rng);
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

struct LatentFit {
  Vector x;
  Vector reconstruction;
  double cost = 0.0;
  SolverTrace trace;
  EvalCounters counters;
};

/// Evaluation-time latent inference; the reconstruction decodes the selected
/// latent with a converged forward solve.
inline LatentFit fit_latent_problem(const Model& model, const InputOptProblem& p, const JiioConfig& cfg,
                                    const Vector* warm_start = nullptr) {
  JiioResult r = jiio_solve(p, cfg, warm_start);
  LatentFit out;
  const AugmentedState s = unpack_state(p, r.v);
  out.x = s.x;
  const SolverConfig fwd{SolverKind::kAnderson, 500, 1e-10, 20, 1.0, std::nullopt, AndersonType::kTypeII};
  const ForwardResult f = forward_solve(model.layer, detail::make_ref(p).total_input(0, s.x), fwd, nullptr, &s.z);
  out.reconstruction = model.head.apply(f.z);
  out.cost = loss_eval(p.loss, model.head, f.z);
  out.trace = std::move(r.trace);
  out.counters = r.counters;
  return out;
}

/// Evaluation defaults: 100 iterations and the α_x reduction after 65.
inline JiioConfig latent_eval_config() {
  JiioConfig c;
  c.damping = Damping::latent(true);
  c.solver.max_iter = 100;
  return c;
}

inline LatentFit fit_latent(const Model& model, const Vector& y, const JiioConfig& cfg = latent_eval_config(),
                            const Vector* warm_start = nullptr) {
  return fit_latent_problem(model, latent_problem(model, y), cfg, warm_start);
}

struct DiagonalGaussian {
  Vector mean;
  Vector var;
  std::size_t floored = 0;  // coordinates whose variance fell below the floor
};

inline constexpr double kVarianceFloor = 1e-12;

/// Moment fit; variances below the floor are set to zero (those coordinates
/// are sampled at the mean) and counted.
inline DiagonalGaussian fit_diagonal_gaussian(const std::vector<Vector>& latents) {
  require(latents.size() >= 2, ErrorCode::kInvalidArgument, "post-hoc density needs at least 2 latents");
  const std::size_t d = latents.front().size();
  DiagonalGaussian g{Vector(d, 0.0), Vector(d, 0.0), 0};
  const double inv = 1.0 / static_cast<double>(latents.size());
  for (const auto& l : latents) {
    check_same_size(l.size(), d, "latent");
    axpy(inv, l, g.mean);
  }
  for (const auto& l : latents)
    for (std::size_t i = 0; i < d; ++i) g.var[i] += inv * (l[i] - g.mean[i]) * (l[i] - g.mean[i]);
  for (double& v : g.var) {
    if (v < kVarianceFloor) {
      v = 0.0;
      ++g.floored;
    }
  }
  return g;
}

struct PosthocSamples {
  DiagonalGaussian density;
  std::vector<Vector> latents;
  std::vector<Vector> outputs;
};

/// Fits a diagonal Gaussian to the latents, draws n of them and decodes each
/// through the forward fixed point and the head.
inline PosthocSamples sample_posthoc(const Model& model, const std::vector<Vector>& latents, std::size_t n,
                                     SeededRng& rng) {
  PosthocSamples out;
  out.density = fit_diagonal_gaussian(latents);
  const SolverConfig fwd{SolverKind::kAnderson, 500, 1e-10, 20, 1.0, std::nullopt, AndersonType::kTypeII};
  for (std::size_t s = 0; s < n; ++s) {
    Vector x(out.density.mean.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = rng.normal();
      x[i] = out.density.var[i] > 0.0 ? out.density.mean[i] + std::sqrt(out.density.var[i]) * e : out.density.mean[i];
    }
    const ForwardResult f = forward_solve(model.layer, x, fwd);
    out.outputs.push_back(model.head.apply(f.z));
    out.latents.push_back(std::move(x));
  }
  return out;
}

}  // namespace jiio
