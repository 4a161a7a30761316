#pragma once

// Meta-learning with a shared task vector: the layer input is [s; x] for
// example features s and a per-task vector x inferred from the support set.

#include <vector>

#include "jiio/baselines.hpp"
#include "jiio/core/parallel.hpp"
#include "jiio/jiio.hpp"
#include "jiio/tasks/adversarial.hpp"
#include "jiio/tasks/data.hpp"
#include "jiio/tasks/training.hpp"

namespace jiio {

inline JiioConfig meta_eval_config() {
  JiioConfig c;
  c.damping = Damping::meta();
  c.solver.max_iter = 100;
  return c;
}

/// The support set as a stacked problem over the task-vector slice.
inline StackedProblem meta_support_problem(const Model& model, const MetaTask& task) {
  require(task.support.size() >= 1, ErrorCode::kInvalidArgument, "meta task needs K >= 1 support examples");
  const std::size_t feat = model.input_dim() - task.task_dim;
  StackedProblem p{model.layer, model.head, ConstraintSet::unconstrained(), feat, task.task_dim, {}};
  for (std::size_t k = 0; k < task.support.size(); ++k) {
    check_same_size(task.support.inputs[k].size(), feat, "support features");
    Vector in(model.input_dim(), 0.0);
    std::copy(task.support.inputs[k].begin(), task.support.inputs[k].end(), in.begin());
    p.examples.push_back({std::move(in), classification_loss(task.support.labels[k], model.output_dim())});
  }
  return p;
}

inline Vector meta_input(std::span<const double> features, std::span<const double> task_vector) {
  return concat({features, task_vector});
}

struct MetaInner {
  Vector x;                 // shared task vector
  std::vector<Vector> z;    // per support example
  std::vector<Vector> mu;
  JiioResult solve;
};

inline MetaInner meta_inner_solve(const Model& model, const MetaTask& task, const JiioConfig& cfg = meta_eval_config()) {
  const StackedProblem p = meta_support_problem(model, task);
  MetaInner out;
  out.solve = jiio_solve(p, cfg);
  const auto ref = detail::make_ref(p);
  const auto x = ref.x(out.solve.v);
  out.x.assign(x.begin(), x.end());
  for (std::size_t k = 0; k < ref.examples(); ++k) {
    const auto z = ref.z(out.solve.v, k);
    const auto mu = ref.mu(out.solve.v, k);
    out.z.emplace_back(z.begin(), z.end());
    out.mu.emplace_back(mu.begin(), mu.end());
  }
  return out;
}

struct QueryGradient {
  double loss = 0.0;  // mean query cross-entropy
  double accuracy = 0.0;
  ThetaGradient grad;
};

/// Query loss and its θ-gradient with the task vector held fixed.
inline QueryGradient meta_query_grad(const Model& model, const MetaTask& task, std::span<const double> x_star) {
  require(task.query.size() >= 1, ErrorCode::kInvalidArgument, "meta task needs query examples");
  QueryGradient out{0.0, 0.0, model.zero_gradient()};
  const double inv = 1.0 / static_cast<double>(task.query.size());
  for (std::size_t k = 0; k < task.query.size(); ++k) {
    const std::size_t label = task.query.labels[k];
    const DeqLossGradient g = deq_theta_grad(model, meta_input(task.query.inputs[k], x_star),
                                             classification_loss(label, model.output_dim()), classifier_forward());
    ThetaGradient gk = g.grad;
    gk *= inv;
    out.grad += gk;
    out.loss += inv * g.loss;
    const Vector o = model.head.apply(g.z);
    const auto pred = static_cast<std::size_t>(std::max_element(o.begin(), o.end()) - o.begin());
    out.accuracy += inv * (pred == label ? 1.0 : 0.0);
  }
  return out;
}

struct MetaTrainConfig {
  TrainConfig train;
  JiioConfig inner = meta_eval_config();
};

/// Per step: a batch of tasks, JIIO on each support set, query gradient at
/// the frozen task vector, Adam on θ. metrics.loss is the mean query loss,
/// metrics.aux the mean query accuracy.
inline TrainResult meta_train(const std::vector<MetaTask>& tasks, Model model, const MetaTrainConfig& cfg) {
  require(!tasks.empty(), ErrorCode::kInvalidArgument, "meta_train needs at least one task");
  TrainResult result;
  ParameterAdam adam(cfg.train.lr, cfg.train.gamma);
  for (int step = 0; step < cfg.train.steps; ++step) {
    const auto batch = sample_batch(tasks.size(), cfg.train.batch, cfg.train.seed, step);
    std::vector<QueryGradient> qs(batch.size());
    parallel_for(batch.size(), cfg.train.threads, [&](std::size_t i) {
      const MetaTask& task = tasks[batch[i]];
      const MetaInner inner = meta_inner_solve(model, task, cfg.inner);
      qs[i] = meta_query_grad(model, task, inner.x);
    });
    std::vector<ThetaGradient> grads;
    StepMetrics m{step, 0.0, 0.0};
    for (auto& q : qs) {
      m.loss += q.loss / static_cast<double>(qs.size());
      m.aux += q.accuracy / static_cast<double>(qs.size());
      grads.push_back(std::move(q.grad));
    }
    adam.step(model, mean_gradient(model, grads));
    result.metrics.push_back(m);
    if (cfg.train.record_trajectory) result.trajectory.push_back(model.flatten());
  }
  result.model = std::move(model);
  return result;
}

}  // namespace jiio
