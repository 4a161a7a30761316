#pragma once

// L2 adversarial attacks and adversarial training of DEQ classifiers, with
// either the JIIO attack (δ inside the augmented fixed point) or PGD.

#include <vector>

#include "jiio/baselines.hpp"
#include "jiio/core/parallel.hpp"
#include "jiio/jiio.hpp"
#include "jiio/outer.hpp"
#include "jiio/tasks/data.hpp"
#include "jiio/tasks/training.hpp"

namespace jiio {

enum class Adversary { kNone, kJiio, kPgd };

struct AttackConfig {
  double eps = 0.5;
  JiioConfig jiio = default_jiio();
  int pgd_steps = 20;
  double pgd_step = 0.0;  // 0 means 2.5·ε/steps
  SequentialConfig pgd;

  static JiioConfig default_jiio() {
    JiioConfig c;
    c.damping = Damping::adversarial();
    c.solver.max_iter = 80;
    return c;
  }
  double pgd_step_size() const { return pgd_step > 0.0 ? pgd_step : 2.5 * eps / pgd_steps; }
};

inline InnerLoss classification_loss(std::size_t label, std::size_t classes) {
  return {LossKind::kCrossEntropy, one_hot(label, classes), std::nullopt};
}

inline InputOptProblem attack_problem(const Model& model, const Vector& x, std::size_t label, double eps) {
  InnerLoss loss = classification_loss(label, model.output_dim());
  loss.kind = LossKind::kNegCrossEntropy;
  return {model.layer, model.head, std::move(loss), ConstraintSet::l2_ball(Vector(x.size(), 0.0), eps), x};
}

struct AttackResult {
  Vector delta;
  Vector v;  // augmented state for JIIO attacks
  EvalCounters counters;
};

/// δ* from the joint (z, μ, δ) solve of min −ℓ(h(z), y) over ‖δ‖ ≤ ε.
inline AttackResult jiio_attack(const Model& model, const Vector& x, std::size_t label, const AttackConfig& cfg) {
  const InputOptProblem p = attack_problem(model, x, label, cfg.eps);
  JiioResult r = jiio_solve(p, cfg.jiio);
  return {unpack_state(p, r.v).x, std::move(r.v), r.counters};
}

inline Vector run_attack(Adversary kind, const Model& model, const Vector& x, std::size_t label,
                         const AttackConfig& cfg) {
  switch (kind) {
    case Adversary::kNone: return Vector(x.size(), 0.0);
    case Adversary::kJiio: return jiio_attack(model, x, label, cfg).delta;
    case Adversary::kPgd:
      return pgd_attack(model, x, one_hot(label, model.output_dim()), cfg.eps, cfg.pgd_steps, cfg.pgd_step_size(),
                        cfg.pgd);
  }
  return Vector(x.size(), 0.0);
}

inline const SolverConfig& classifier_forward() {
  static const SolverConfig cfg{SolverKind::kAnderson, 500, 1e-8, 20, 1.0, std::nullopt, AndersonType::kTypeII};
  return cfg;
}

struct Prediction {
  std::size_t label = 0;
  double loss = 0.0;
};

inline Prediction predict(const Model& model, std::span<const double> x, std::size_t label) {
  const ForwardResult f = forward_solve(model.layer, x, classifier_forward());
  const Vector o = model.head.apply(f.z);
  Prediction p;
  p.label = static_cast<std::size_t>(std::max_element(o.begin(), o.end()) - o.begin());
  p.loss = loss_value_output(classification_loss(label, model.output_dim()), o);
  return p;
}

struct RobustEval {
  double accuracy = 0.0;    // fraction in [0,1]
  double mean_loss = 0.0;   // cross-entropy at the attacked input
  std::vector<Vector> deltas;
};

/// Accuracy and loss at x + δ(x) for every item (δ = 0 for kNone).
inline RobustEval evaluate_robust(const Model& model, const Dataset& data, Adversary adversary,
                                  const AttackConfig& cfg, unsigned threads = 1) {
  require(data.labeled() && !data.empty(), ErrorCode::kInvalidArgument, "robust evaluation needs labeled data");
  RobustEval out;
  out.deltas.resize(data.size());
  std::vector<Prediction> preds(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    out.deltas[i] = run_attack(adversary, model, data.items[i], data.labels[i], cfg);
    preds[i] = predict(model, add(data.items[i], out.deltas[i]), data.labels[i]);
  });
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.accuracy += preds[i].label == data.labels[i] ? 1.0 : 0.0;
    out.mean_loss += preds[i].loss;
  }
  out.accuracy /= static_cast<double>(data.size());
  out.mean_loss /= static_cast<double>(data.size());
  return out;
}

struct AdvTrainConfig {
  TrainConfig train;
  AttackConfig attack;
  Adversary adversary = Adversary::kNone;
};

/// Adversarial training: per item the adversary picks δ, then θ descends the
/// loss at x + δ. JIIO items reuse the attack's converged adjoint (sign
/// flipped, as the attack minimizes −ℓ); PGD and clean items differentiate
/// through a fresh forward solve. ε = 0 is clean training.
inline TrainResult adv_train(const Dataset& data, Model model, const AdvTrainConfig& cfg) {
  require(data.labeled() && !data.empty(), ErrorCode::kInvalidArgument, "adv_train needs labeled data");
  require(cfg.attack.eps >= 0.0, ErrorCode::kInvalidArgument, "attack radius must be >= 0");
  const Adversary adversary = cfg.attack.eps == 0.0 ? Adversary::kNone : cfg.adversary;
  TrainResult result;
  ParameterAdam adam(cfg.train.lr, cfg.train.gamma);
  for (int step = 0; step < cfg.train.steps; ++step) {
    const auto batch = sample_batch(data.size(), cfg.train.batch, cfg.train.seed, step);
    std::vector<ThetaGradient> grads(batch.size());
    std::vector<double> losses(batch.size());
    parallel_for(batch.size(), cfg.train.threads, [&](std::size_t i) {
      const Vector& x = data.items[batch[i]];
      const std::size_t label = data.labels[batch[i]];
      if (adversary == Adversary::kJiio) {
        const InputOptProblem p = attack_problem(model, x, label, cfg.attack.eps);
        const JiioResult r = jiio_solve(p, cfg.attack.jiio);
        grads[i] = grad_theta_reuse(p, r.v, OuterLoss::Kind::kNegOfInner);
        losses[i] = -r.cost;
        return;
      }
      const Vector delta = run_attack(adversary, model, x, label, cfg.attack);
      const DeqLossGradient g =
          deq_theta_grad(model, add(x, delta), classification_loss(label, model.output_dim()), classifier_forward());
      grads[i] = g.grad;
      losses[i] = g.loss;
    });
    StepMetrics m{step, 0.0, 0.0};
    for (double l : losses) m.loss += l / static_cast<double>(losses.size());
    adam.step(model, mean_gradient(model, grads));
    result.metrics.push_back(m);
    if (cfg.train.record_trajectory) result.trajectory.push_back(model.flatten());
  }
  result.model = std::move(model);
  return result;
}

}  // namespace jiio
