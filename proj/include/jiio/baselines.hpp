#pragma once

// The sequential approach: for every update of the input, a full forward
// fixed-point solve followed by an implicit (adjoint) input gradient, driven
// by gradient descent, Adam or projected gradient descent.

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/core/linalg.hpp"
#include "jiio/jiio.hpp"
#include "jiio/layer.hpp"
#include "jiio/solvers.hpp"

namespace jiio {

struct ForwardResult {
  Vector z;
  SolverTrace trace;
};

/// Plain DEQ forward pass z* = f(z*, x) with the configured solver.
inline ForwardResult forward_solve(const EquilibriumLayer& layer, std::span<const double> x, const SolverConfig& cfg,
                                   EvalCounters* counters = nullptr, const Vector* warm_start = nullptr) {
  const Vector input(x.begin(), x.end());
  EvalCounters local;
  EvalCounters* c = counters ? counters : &local;
  FixedPointProblem fp;
  fp.map = [&layer, input, c](const Vector& z) { return layer.eval(z, input, c); };
  fp.counters = c;
  Vector z0 = warm_start ? *warm_start : Vector(layer.state_dim(), 0.0);
  ForwardResult r;
  r.trace = solve_fixed_point(fp, std::move(z0), cfg);
  r.z = r.trace.empty() ? Vector(layer.state_dim(), 0.0) : r.trace.last_iterate();
  if (!r.trace.empty() && r.trace.converged && cfg.kind != SolverKind::kBroyden) {
    // The recorded iterate is the one whose residual met tol; its image is one
    // contraction step closer and was already computed by the solver.
    r.z = layer.eval(r.z, input);
  }
  return r;
}

enum class AdjointMethod { kRichardson, kDense };

struct AdjointConfig {
  AdjointMethod method = AdjointMethod::kRichardson;
  int max_iter = 1000;
  double tol = 1e-8;
};

struct InputGradient {
  Vector grad;  // ∂ℓ/∂x over the variable block
  Vector mu;
};

/// ∂ℓ(z*(x))/∂x = μᵀ ∂f/∂x with μ = (I − J_zᵀ)⁻¹(∂ℓ/∂z)ᵀ.
inline InputGradient implicit_input_grad(const InputOptProblem& p, std::span<const double> x,
                                         std::span<const double> z_star, const AdjointConfig& cfg = {},
                                         EvalCounters* counters = nullptr) {
  const auto ref = detail::make_ref(p);
  const Vector in = ref.total_input(0, x);
  InputGradient out;
  if (cfg.method == AdjointMethod::kRichardson) {
    out.mu = richardson_mu(p, z_star, x, cfg.max_iter, cfg.tol, counters);
  } else {
    Matrix a = p.layer.jacobian_z(z_star, in);
    Matrix m = Matrix::identity(p.state_dim()) - transpose(a);
    out.mu = solve_dense(m, loss_grad_z(p.loss, p.head, z_star));
  }
  out.grad = ref.restrict(p.layer.vjp_x(z_star, in, out.mu, counters));
  return out;
}

struct DeqLossGradient {
  double loss = 0.0;
  Vector z;
  ThetaGradient grad;
};

/// Standard DEQ backward for ℓ(h(z*(x)), ·) at a fixed input: forward solve,
/// adjoint μ = (I − J_zᵀ)⁻¹(∂ℓ/∂z)ᵀ, then μᵀ∂f/∂θ plus the head term.
inline DeqLossGradient deq_theta_grad(const Model& model, std::span<const double> x, const InnerLoss& loss,
                                      const SolverConfig& forward, const AdjointConfig& adjoint = {},
                                      EvalCounters* counters = nullptr) {
  DeqLossGradient out;
  ForwardResult fwd = forward_solve(model.layer, x, forward, counters);
  if (fwd.trace.non_finite || !all_finite(fwd.z)) throw Error(ErrorCode::kNonFinite, "forward solve diverged");
  out.z = std::move(fwd.z);
  out.loss = loss_eval(loss, model.head, out.z);
  const InputOptProblem p{model.layer, model.head, loss, ConstraintSet::unconstrained(), Vector(x.begin(), x.end()),
                          0, 0};
  Vector mu;
  if (adjoint.method == AdjointMethod::kRichardson) {
    mu = richardson_mu(p, out.z, {}, adjoint.max_iter, adjoint.tol, counters);
  } else {
    Matrix m = Matrix::identity(model.state_dim()) - transpose(model.layer.jacobian_z(out.z, x));
    mu = solve_dense(m, loss_grad_z(loss, model.head, out.z));
  }
  out.grad = model.zero_gradient();
  out.grad.add_layer(model.layer.vjp_theta(out.z, x, mu));
  add_head_gradient(loss, model.head, out.z, out.grad);
  return out;
}

struct OptimizerState {
  enum class Kind { kGD, kAdam, kPGD };

  Kind kind = Kind::kGD;
  double step = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  ConstraintSet constraint;  // PGD only
  Vector m, v;               // Adam moments
  long t = 0;

  static OptimizerState gd(double step) {
    OptimizerState s;
    s.step = step;
    return s;
  }
  static OptimizerState adam(double step, double beta1 = 0.9, double beta2 = 0.999, double eps_hat = 1e-8) {
    OptimizerState s;
    s.kind = Kind::kAdam;
    s.step = step;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps_hat = eps_hat;
    return s;
  }
  static OptimizerState pgd(double step, ConstraintSet c) {
    OptimizerState s;
    s.kind = Kind::kPGD;
    s.step = step;
    s.constraint = std::move(c);
    return s;
  }

  /// One descent step on x for gradient g. PGD takes a normalized (steepest
  /// L2) step and projects back onto its constraint set.
  void update(std::span<double> x, std::span<const double> g) {
    check_same_size(x.size(), g.size(), "optimizer update");
    require(step >= 0.0, ErrorCode::kInvalidArgument, "optimizer step must be >= 0");
    switch (kind) {
      case Kind::kGD:
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= step * g[i];
        break;
      case Kind::kAdam: {
        if (m.size() != x.size()) {
          m.assign(x.size(), 0.0);
          v.assign(x.size(), 0.0);
        }
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < x.size(); ++i) {
          m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
          v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
          x[i] -= step * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_hat);
        }
        break;
      }
      case Kind::kPGD: {
        const double gn = norm2(g);
        if (gn > 0.0)
          for (std::size_t i = 0; i < x.size(); ++i) x[i] -= step * g[i] / gn;
        project_in_place(constraint, x);
        break;
      }
    }
  }
};

struct SequentialConfig {
  SolverConfig forward{SolverKind::kAnderson, 500, 1e-8, 20, 1.0, std::nullopt, AndersonType::kTypeII};
  AdjointConfig adjoint{};
  /// Start each forward solve from the previous fixed point.
  bool warm_start = true;
};

struct SequentialResult {
  Vector x_best;
  Vector x_final;
  double best_cost = std::numeric_limits<double>::infinity();
  std::size_t forward_solves = 0;
  std::size_t adjoint_solves = 0;
  EvalCounters counters;
  /// One row per step: cost and ‖∇ₓℓ‖ at x_t with cumulative counters;
  /// iterates hold x_t.
  SolverTrace trace;
};

/// T steps of: forward solve at x_t, implicit gradient, optimizer update.
/// Returns the least-cost evaluated iterate and the final one.
inline SequentialResult sequential_input_opt(const InputOptProblem& p, Vector x0, int steps, OptimizerState optimizer,
                                             const SequentialConfig& cfg = {}) {
  require(steps >= 1, ErrorCode::kInvalidArgument, "sequential_input_opt needs T >= 1");
  const auto ref = detail::make_ref(p);
  check_same_size(x0.size(), ref.var_dim, "sequential x0");
  SequentialResult r;
  Vector x = std::move(x0);
  project_in_place(p.constraint, x);
  std::optional<Vector> z_prev;
  const auto start = std::chrono::steady_clock::now();

  for (int t = 0; t < steps; ++t) {
    const Vector in = ref.total_input(0, x);
    ForwardResult fwd = forward_solve(p.layer, in, cfg.forward, &r.counters,
                                      cfg.warm_start && z_prev ? &*z_prev : nullptr);
    ++r.forward_solves;
    if (fwd.trace.non_finite || !all_finite(fwd.z)) {
      r.trace.non_finite = true;
      break;
    }
    const InputGradient grad = implicit_input_grad(p, x, fwd.z, cfg.adjoint, &r.counters);
    ++r.adjoint_solves;
    const double cost = loss_eval(p.loss, p.head, fwd.z);

    TraceRow row;
    row.iter = static_cast<std::size_t>(t);
    row.f_evals = r.counters.f_evals;
    row.vjp_evals = r.counters.vjp_evals;
    row.residual = norm2(grad.grad);
    row.cost = cost;
    row.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
    r.trace.rows.push_back(row);
    r.trace.iterates.push_back(x);
    if (cost < r.best_cost) {
      r.best_cost = cost;
      r.x_best = x;
    }
    z_prev = std::move(fwd.z);
    optimizer.update(x, grad.grad);
    if (!all_finite(x)) {
      r.trace.non_finite = true;
      break;
    }
  }
  if (r.x_best.empty()) r.x_best = x;
  r.x_final = x;
  return r;
}

/// L2 PGD adversary: ascends the classification loss over δ ∈ B(0, ε) by
/// descending its negation; returns the final iterate.
inline Vector pgd_attack(const Model& model, std::span<const double> x, const Vector& target, double eps, int steps,
                         double step_size, const SequentialConfig& cfg = {}) {
  require(eps > 0.0, ErrorCode::kInvalidArgument, "attack radius must be > 0");
  InputOptProblem p{model.layer, model.head, {LossKind::kNegCrossEntropy, target, std::nullopt},
                    ConstraintSet::l2_ball(Vector(x.size(), 0.0), eps), Vector(x.begin(), x.end())};
  auto r = sequential_input_opt(p, Vector(x.size(), 0.0), steps, OptimizerState::pgd(step_size, p.constraint), cfg);
  return r.x_final;
}

}  // namespace jiio
