#pragma once

// The augmented equilibrium system over v = (z, μ, x): its damped and
// projected joint update, the KKT residual of the equality-constrained inner
// problem, and the top-level joint solve.
//
// Problems may stack several examples that share one optimization variable
// (the meta-learning inner problem); the single-example problem is the K = 1
// case of the same code path. Iterates are laid out as
//   v = [z₁ … z_K, μ₁ … μ_K, x].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/core/tensor.hpp"
#include "jiio/layer.hpp"
#include "jiio/solvers.hpp"

namespace jiio {

// ---------------------------------------------------------------------------
// Constraint sets and projection
// ---------------------------------------------------------------------------

struct ConstraintSet {
  enum class Kind { kUnconstrained, kL2Ball, kBox };

  Kind kind = Kind::kUnconstrained;
  Vector center;  // L2 ball
  double radius = 0.0;
  Vector lo, hi;  // box

  static ConstraintSet unconstrained() { return {}; }

  static ConstraintSet l2_ball(Vector center, double radius) {
    require(radius > 0.0, ErrorCode::kInvalidArgument, "ball radius must be > 0");
    ConstraintSet c;
    c.kind = Kind::kL2Ball;
    c.center = std::move(center);
    c.radius = radius;
    return c;
  }

  static ConstraintSet box(Vector lo, Vector hi) {
    check_same_size(lo.size(), hi.size(), "box bounds");
    for (std::size_t i = 0; i < lo.size(); ++i)
      require(lo[i] <= hi[i], ErrorCode::kInvalidArgument, "box needs lo <= hi");
    ConstraintSet c;
    c.kind = Kind::kBox;
    c.lo = std::move(lo);
    c.hi = std::move(hi);
    return c;
  }

  bool contains(std::span<const double> x, double slack = 0.0) const {
    switch (kind) {
      case Kind::kUnconstrained: return true;
      case Kind::kL2Ball: return norm2(sub(x, center)) <= radius + slack;
      case Kind::kBox:
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
        return true;
    }
    return true;
  }
};

inline void project_in_place(const ConstraintSet& c, std::span<double> x) {
  switch (c.kind) {
    case ConstraintSet::Kind::kUnconstrained: return;
    case ConstraintSet::Kind::kL2Ball: {
      check_same_size(x.size(), c.center.size(), "project ball");
      double r2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - c.center[i]) * (x[i] - c.center[i]);
      const double r = std::sqrt(r2);
      if (r <= c.radius) return;
      const double s = c.radius / r;
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.center[i] + s * (x[i] - c.center[i]);
      return;
    }
    case ConstraintSet::Kind::kBox:
      check_same_size(x.size(), c.lo.size(), "project box");
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], c.lo[i], c.hi[i]);
      return;
  }
}

/// Euclidean projection onto the set.
inline Vector project(const ConstraintSet& c, std::span<const double> x) {
  Vector out(x.begin(), x.end());
  project_in_place(c, out);
  return out;
}

// ---------------------------------------------------------------------------
// Damping
// ---------------------------------------------------------------------------

struct Damping {
  double alpha_z = 0.8;
  double alpha_mu = 0.6;
  double alpha_x = 0.01;
  /// (iteration threshold, α_x from that iteration on); thresholds increasing.
  std::vector<std::pair<std::size_t, double>> schedule;

  double alpha_x_at(std::size_t iter) const {
    double a = alpha_x;
    for (const auto& [threshold, value] : schedule)
      if (iter >= threshold) a = value;
    return a;
  }

  void validate() const {
    auto in_range = [](double a) { return a >= 0.0 && a <= 1.0; };
    require(in_range(alpha_z) && in_range(alpha_mu) && in_range(alpha_x), ErrorCode::kInvalidArgument,
            "damping factors must lie in [0,1]");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      require(in_range(schedule[i].second), ErrorCode::kInvalidArgument, "scheduled alpha_x must lie in [0,1]");
      require(i == 0 || schedule[i].first > schedule[i - 1].first, ErrorCode::kInvalidArgument,
              "damping schedule thresholds must increase");
    }
  }

  /// Latent-fitting and inverse-problem defaults; `with_schedule` adds the
  /// α_x reduction used for 100-iteration runs.
  static Damping latent(bool with_schedule = false) {
    Damping d{0.8, 0.6, 0.01, {}};
    if (with_schedule) d.schedule = {{65, 0.003}};
    return d;
  }
  static Damping adversarial(bool with_schedule = false) {
    Damping d{0.8, 0.6, 0.6, {}};
    if (with_schedule) d.schedule = {{65, 0.2}};
    return d;
  }
  static Damping meta(bool with_schedule = false) {
    Damping d{0.8, 0.6, 0.04, {}};
    if (with_schedule) d.schedule = {{65, 0.01}};
    return d;
  }
};

// ---------------------------------------------------------------------------
// Problems
// ---------------------------------------------------------------------------

inline constexpr std::size_t kWholeInput = static_cast<std::size_t>(-1);

/// minimize over x ∈ C:  ℓ(h(z), y)  subject to  z = f(z, x₀ + Px), where P
/// places the variable at `var_offset` inside the layer input. For latent
/// problems x₀ = 0 and P = I; for perturbation problems x₀ is the clean input.
struct InputOptProblem {
  EquilibriumLayer layer;
  OutputHead head;
  InnerLoss loss;
  ConstraintSet constraint;
  Vector base_input;  // empty means zeros
  std::size_t var_offset = 0;
  std::size_t var_dim = kWholeInput;

  std::size_t state_dim() const { return layer.state_dim(); }
  std::size_t variable_dim() const { return var_dim == kWholeInput ? layer.input_dim() - var_offset : var_dim; }
};

struct InputExample {
  Vector base_input;
  InnerLoss loss;
};

/// Several examples, each with its own state and adjoint, sharing one variable.
struct StackedProblem {
  EquilibriumLayer layer;
  OutputHead head;
  ConstraintSet constraint;
  std::size_t var_offset = 0;
  std::size_t var_dim = kWholeInput;
  std::vector<InputExample> examples;

  std::size_t state_dim() const { return layer.state_dim(); }
  std::size_t variable_dim() const { return var_dim == kWholeInput ? layer.input_dim() - var_offset : var_dim; }
};

struct AugmentedState {
  Vector z;
  Vector mu;
  Vector x;

  Vector pack() const { return concat({std::span<const double>(z), mu, x}); }

  static AugmentedState unpack(std::span<const double> v, std::size_t n, std::size_t d) {
    check_same_size(v.size(), 2 * n + d, "AugmentedState::unpack");
    return {Vector(v.begin(), v.begin() + n), Vector(v.begin() + n, v.begin() + 2 * n),
            Vector(v.begin() + 2 * n, v.end())};
  }
};

namespace detail {

/// Non-owning view shared by the single and stacked problem types.
struct SystemRef {
  const EquilibriumLayer* layer = nullptr;
  const OutputHead* head = nullptr;
  const ConstraintSet* constraint = nullptr;
  std::size_t var_offset = 0;
  std::size_t var_dim = 0;
  std::vector<const Vector*> base;
  std::vector<const InnerLoss*> loss;

  std::size_t n() const { return layer->state_dim(); }
  std::size_t examples() const { return loss.size(); }
  std::size_t packed_dim() const { return 2 * n() * examples() + var_dim; }

  Vector total_input(std::size_t k, std::span<const double> x) const {
    Vector in = base[k]->empty() ? Vector(layer->input_dim(), 0.0) : *base[k];
    check_same_size(in.size(), layer->input_dim(), "base input");
    check_same_size(x.size(), var_dim, "optimization variable");
    for (std::size_t i = 0; i < var_dim; ++i) in[var_offset + i] += x[i];
    return in;
  }

  /// Restriction of an input-space vector to the variable block.
  Vector restrict(std::span<const double> full) const {
    return Vector(full.begin() + static_cast<std::ptrdiff_t>(var_offset),
                  full.begin() + static_cast<std::ptrdiff_t>(var_offset + var_dim));
  }

  std::span<const double> z(std::span<const double> v, std::size_t k) const { return v.subspan(k * n(), n()); }
  std::span<const double> mu(std::span<const double> v, std::size_t k) const {
    return v.subspan((examples() + k) * n(), n());
  }
  std::span<const double> x(std::span<const double> v) const { return v.subspan(2 * n() * examples(), var_dim); }

  void validate() const {
    require(var_offset + var_dim <= layer->input_dim(), ErrorCode::kDimensionMismatch,
            "variable block exceeds the layer input");
    require(!loss.empty(), ErrorCode::kInvalidArgument, "problem has no examples");
  }
};

inline SystemRef make_ref(const InputOptProblem& p) {
  SystemRef r{&p.layer, &p.head, &p.constraint, p.var_offset, p.variable_dim(), {&p.base_input}, {&p.loss}};
  r.validate();
  return r;
}

inline SystemRef make_ref(const StackedProblem& p) {
  SystemRef r{&p.layer, &p.head, &p.constraint, p.var_offset, p.variable_dim(), {}, {}};
  for (const auto& e : p.examples) {
    r.base.push_back(&e.base_input);
    r.loss.push_back(&e.loss);
  }
  r.validate();
  return r;
}

inline Vector augmented_step(const SystemRef& s, std::span<const double> v, const Damping& damping, std::size_t iter,
                             EvalCounters* counters) {
  check_same_size(v.size(), s.packed_dim(), "augmented state");
  const std::size_t n = s.n();
  const std::size_t K = s.examples();
  const double az = damping.alpha_z;
  const double am = damping.alpha_mu;
  const double ax = damping.alpha_x_at(iter);
  const auto x = s.x(v);

  Vector out(v.size());
  Vector x_grad;
  for (std::size_t k = 0; k < K; ++k) {
    const auto z = s.z(v, k);
    const auto mu = s.mu(v, k);
    const Vector in = s.total_input(k, x);
    const Vector fz = s.layer->eval(z, in, counters);
    const Vector jz = s.layer->vjp_z(z, in, mu, counters);
    const Vector jx = s.restrict(s.layer->vjp_x(z, in, mu, counters));
    const Vector lg = loss_grad_z(*s.loss[k], *s.head, z);
    double* zo = out.data() + k * n;
    double* mo = out.data() + (K + k) * n;
    for (std::size_t i = 0; i < n; ++i) {
      zo[i] = (1.0 - az) * z[i] + az * fz[i];
      mo[i] = (1.0 - am) * mu[i] + am * (jz[i] + lg[i]);
    }
    if (k == 0) {
      x_grad = jx;
    } else {
      axpy(1.0, jx, x_grad);
    }
  }
  std::span<double> xo(out.data() + 2 * n * K, s.var_dim);
  for (std::size_t i = 0; i < s.var_dim; ++i) xo[i] = x[i] - ax * x_grad[i];
  project_in_place(*s.constraint, xo);
  return out;
}

struct KktParts {
  Vector r_z, r_mu, r_x;
  double norm = 0.0;
};

inline KktParts kkt_residual(const SystemRef& s, std::span<const double> v) {
  check_same_size(v.size(), s.packed_dim(), "augmented state");
  const std::size_t K = s.examples();
  const auto x = s.x(v);
  KktParts r;
  Vector x_grad(s.var_dim, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto z = s.z(v, k);
    const auto mu = s.mu(v, k);
    const Vector in = s.total_input(k, x);
    const Vector rz = sub(s.layer->eval(z, in), z);
    Vector rm = add(loss_grad_z(*s.loss[k], *s.head, z), s.layer->vjp_z(z, in, mu));
    axpy(-1.0, mu, rm);
    axpy(1.0, s.restrict(s.layer->vjp_x(z, in, mu)), x_grad);
    r.r_z.insert(r.r_z.end(), rz.begin(), rz.end());
    r.r_mu.insert(r.r_mu.end(), rm.begin(), rm.end());
  }
  if (s.constraint->kind == ConstraintSet::Kind::kUnconstrained) {
    r.r_x = std::move(x_grad);
  } else {
    // Projected stationarity x − Π(x − ∇ₓL).
    const Vector trial = project(*s.constraint, sub(x, x_grad));
    r.r_x = sub(x, trial);
  }
  const double a = norm2(r.r_z), b = norm2(r.r_mu), c = norm2(r.r_x);
  r.norm = std::sqrt(a * a + b * b + c * c);
  return r;
}

inline double total_cost(const SystemRef& s, std::span<const double> v) {
  double c = 0.0;
  for (std::size_t k = 0; k < s.examples(); ++k) c += loss_eval(*s.loss[k], *s.head, s.z(v, k));
  return c;
}

inline Vector initial_state(const SystemRef& s) {
  Vector v(s.packed_dim(), 0.0);
  std::span<double> x(v.data() + 2 * s.n() * s.examples(), s.var_dim);
  project_in_place(*s.constraint, x);
  return v;
}

}  // namespace detail

/// One damped joint update
///   z⁺ = (1−α_z)z + α_z f(z,x)
///   μ⁺ = (1−α_μ)μ + α_μ((∂f/∂z)ᵀμ + (∂ℓ/∂z)ᵀ)
///   x⁺ = Π_C(x − α_x (∂f/∂x)ᵀμ)
/// costing one layer evaluation and two VJPs per example. `iter` selects the
/// scheduled α_x.
inline Vector augmented_step(const InputOptProblem& p, std::span<const double> v, const Damping& damping,
                             EvalCounters* counters = nullptr, std::size_t iter = 0) {
  return detail::augmented_step(detail::make_ref(p), v, damping, iter, counters);
}

inline AugmentedState augmented_step(const InputOptProblem& p, const AugmentedState& v, const Damping& damping,
                                     EvalCounters* counters = nullptr, std::size_t iter = 0) {
  return AugmentedState::unpack(augmented_step(p, v.pack(), damping, counters, iter), p.state_dim(), p.variable_dim());
}

/// KKT residual blocks (f − z, ∇ℓ + J_zᵀμ − μ, J_xᵀμ); for constrained
/// problems the last block is the projected-gradient residual.
inline detail::KktParts kkt_residual(const InputOptProblem& p, std::span<const double> v) {
  return detail::kkt_residual(detail::make_ref(p), v);
}
inline detail::KktParts kkt_residual(const StackedProblem& p, std::span<const double> v) {
  return detail::kkt_residual(detail::make_ref(p), v);
}

/// The augmented update as a fixed-point problem for the generic solvers.
/// The damping schedule is keyed on the number of map evaluations so far,
/// which equals the iteration index for every solver in this library.
template <class Problem>
FixedPointProblem augmented_fixed_point(const Problem& p, const Damping& damping, EvalCounters& counters) {
  damping.validate();
  auto ref = std::make_shared<detail::SystemRef>(detail::make_ref(p));
  auto calls = std::make_shared<std::size_t>(0);
  FixedPointProblem fp;
  fp.map = [ref, calls, damping, c = &counters](const Vector& v) {
    return detail::augmented_step(*ref, v, damping, (*calls)++, c);
  };
  fp.project = [ref](Vector& v) {
    std::span<double> x(v.data() + 2 * ref->n() * ref->examples(), ref->var_dim);
    project_in_place(*ref->constraint, x);
  };
  fp.observe = [ref](const Vector& v) {
    return IterateStats{detail::total_cost(*ref, v), detail::kkt_residual(*ref, v).norm};
  };
  fp.counters = &counters;
  return fp;
}

struct JiioConfig {
  Damping damping = Damping::latent();
  SolverConfig solver{SolverKind::kAnderson, 40, 1e-8, 20, 1.0, std::nullopt, AndersonType::kTypeI};
  /// Feasibility factor of the iterate selection.
  double select_c = 10.0;
};

struct JiioResult {
  Vector v;               // selected packed iterate
  std::size_t selected = 0;
  SolverTrace trace;
  EvalCounters counters;
  double cost = 0.0;      // inner cost at the selected iterate
  double kkt_norm = 0.0;  // KKT norm at the selected iterate
};

/// Runs the configured solver on the augmented map from (0, 0, Π(0)) or a warm
/// start, records inner cost and KKT norm per iterate and returns the selected
/// iterate. Running out of iterations is not an error; the trace says how far
/// the solve got.
template <class Problem>
JiioResult jiio_solve(const Problem& p, const JiioConfig& cfg, const Vector* warm_start = nullptr) {
  const auto ref = detail::make_ref(p);
  JiioResult result;
  Vector v0 = warm_start ? *warm_start : detail::initial_state(ref);
  check_same_size(v0.size(), ref.packed_dim(), "jiio warm start");
  const FixedPointProblem fp = augmented_fixed_point(p, cfg.damping, result.counters);
  result.trace = solve_fixed_point(fp, std::move(v0), cfg.solver);
  if (result.trace.empty()) {
    result.trace.non_finite = true;
    result.v = warm_start ? *warm_start : detail::initial_state(ref);
    return result;
  }
  result.selected = select_iterate(result.trace, cfg.select_c);
  result.v = result.trace.iterates[result.selected];
  result.cost = result.trace.rows[result.selected].cost;
  result.kkt_norm = result.trace.rows[result.selected].kkt_norm;
  return result;
}

inline AugmentedState unpack_state(const InputOptProblem& p, std::span<const double> v) {
  return AugmentedState::unpack(v, p.state_dim(), p.variable_dim());
}

/// μ ← (∂f/∂z)ᵀμ + (∂ℓ/∂z)ᵀ from μ = 0 until the increment falls below tol.
inline Vector richardson_mu(const InputOptProblem& p, std::span<const double> z, std::span<const double> x,
                            int max_iter, double tol, EvalCounters* counters = nullptr) {
  const auto ref = detail::make_ref(p);
  const Vector in = ref.total_input(0, x);
  const Vector g = loss_grad_z(p.loss, p.head, z);
  Vector mu(p.state_dim(), 0.0);
  for (int it = 0; it < max_iter; ++it) {
    Vector next = add(p.layer.vjp_z(z, in, mu, counters), g);
    if (!all_finite(next)) throw Error(ErrorCode::kNonFinite, "richardson_mu diverged");
    const double step = norm2(sub(next, mu));
    mu = std::move(next);
    if (step <= tol) return mu;
  }
  throw Error(ErrorCode::kNoConvergence, "richardson_mu did not converge in " + std::to_string(max_iter) + " iterations");
}

}  // namespace jiio
