#pragma once

// Fixed-point and root-finding engines shared by the plain forward DEQ solve
// and the augmented (z, μ, x) system. Every engine records a full trace.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/core/linalg.hpp"
#include "jiio/core/tensor.hpp"
#include "jiio/layer.hpp"

namespace jiio {

enum class SolverKind { kNaive, kAnderson, kBroyden };
enum class AndersonType { kTypeI, kTypeII };

struct SolverConfig {
  SolverKind kind = SolverKind::kAnderson;
  int max_iter = 100;
  double tol = 1e-8;
  int memory = 20;
  double beta = 1.0;
  /// Ridge for the Anderson coefficient solve; unset means 1e-14·‖g_k‖² with
  /// g_k the current residual.
  std::optional<double> ridge;
  AndersonType anderson_type = AndersonType::kTypeII;

  void validate() const {
    require(max_iter >= 1, ErrorCode::kInvalidArgument, "max_iter must be >= 1");
    require(tol > 0.0, ErrorCode::kInvalidArgument, "tol must be > 0");
    require(memory >= 0, ErrorCode::kInvalidArgument, "memory must be >= 0");
    require(beta > 0.0 && beta <= 1.0, ErrorCode::kInvalidArgument, "beta must lie in (0,1]");
    require(!ridge || *ridge >= 0.0, ErrorCode::kInvalidArgument, "ridge must be >= 0");
  }
};

struct TraceRow {
  std::size_t iter = 0;
  std::uint64_t f_evals = 0;
  std::uint64_t vjp_evals = 0;
  double residual = 0.0;
  double kkt_norm = std::numeric_limits<double>::quiet_NaN();
  double cost = std::numeric_limits<double>::quiet_NaN();
  std::int64_t wall_ns = 0;

  std::uint64_t evals() const noexcept { return f_evals + vjp_evals; }
};

struct SolverTrace {
  std::vector<TraceRow> rows;
  std::vector<Vector> iterates;
  bool converged = false;
  bool non_finite = false;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
  const Vector& last_iterate() const { return iterates.back(); }

  std::vector<double> costs() const {
    std::vector<double> c;
    c.reserve(rows.size());
    for (const auto& r : rows) c.push_back(r.cost);
    return c;
  }
  std::vector<double> kkt_norms() const {
    std::vector<double> c;
    c.reserve(rows.size());
    for (const auto& r : rows) c.push_back(r.kkt_norm);
    return c;
  }
};

struct IterateStats {
  double cost = std::numeric_limits<double>::quiet_NaN();
  double kkt_norm = std::numeric_limits<double>::quiet_NaN();
};

/// A self-map F together with optional hooks: `project` is applied to
/// extrapolated iterates (the map is expected to keep its own outputs
/// feasible), `observe` reports per-iterate diagnostics, and `counters` is the
/// evaluation counter the map increments.
struct FixedPointProblem {
  std::function<Vector(const Vector&)> map;
  std::function<void(Vector&)> project;
  std::function<IterateStats(const Vector&)> observe;
  const EvalCounters* counters = nullptr;
};

namespace detail {

class TraceRecorder {
 public:
  TraceRecorder(const FixedPointProblem& problem, SolverTrace& trace)
      : problem_(problem), trace_(trace), start_(std::chrono::steady_clock::now()) {}

  void record(std::size_t iter, const Vector& v, double residual) {
    TraceRow row;
    row.iter = iter;
    row.residual = residual;
    if (problem_.counters) {
      row.f_evals = problem_.counters->f_evals;
      row.vjp_evals = problem_.counters->vjp_evals;
    }
    if (problem_.observe) {
      const IterateStats s = problem_.observe(v);
      row.cost = s.cost;
      row.kkt_norm = s.kkt_norm;
    }
    row.wall_ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_).count();
    trace_.rows.push_back(row);
    trace_.iterates.push_back(v);
  }

 private:
  const FixedPointProblem& problem_;
  SolverTrace& trace_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// v ← F(v) until ‖F(v) − v‖ ≤ tol or max_iter.
inline SolverTrace iterate_naive(const FixedPointProblem& problem, Vector v0, const SolverConfig& cfg) {
  cfg.validate();
  SolverTrace trace;
  detail::TraceRecorder rec(problem, trace);
  Vector v = std::move(v0);
  for (int k = 0;; ++k) {
    Vector fv = problem.map(v);
    if (!all_finite(fv)) {
      trace.non_finite = true;
      break;
    }
    const double res = norm2(sub(fv, v));
    rec.record(static_cast<std::size_t>(k), v, res);
    if (res <= cfg.tol) {
      trace.converged = true;
      break;
    }
    if (k == cfg.max_iter) break;
    v = std::move(fv);
  }
  return trace;
}

/// Anderson acceleration over windows ΔV (iterate differences) and ΔG
/// (residual differences):  v⁺ = v + βg − (ΔV + βΔG)γ.
///
/// Type-II takes γ = argmin ‖g − ΔGγ‖² + λ‖γ‖²; Type-I solves
/// (ΔVᵀΔG + λI)γ = ΔVᵀg. With an empty window the step is plain mixing, and
/// with β = 1 it is exactly F(v), so memory 0 reproduces iterate_naive.
inline SolverTrace anderson(const FixedPointProblem& problem, Vector v0, const SolverConfig& cfg) {
  cfg.validate();
  SolverTrace trace;
  detail::TraceRecorder rec(problem, trace);
  const std::size_t m = static_cast<std::size_t>(cfg.memory);
  const double beta = cfg.beta;

  std::deque<Vector> dv_hist;
  std::deque<Vector> dg_hist;
  Vector v = std::move(v0);
  Vector prev_v, prev_g;
  double ridge = cfg.ridge.value_or(0.0);

  for (int k = 0;; ++k) {
    Vector fv = problem.map(v);
    if (!all_finite(fv)) {
      trace.non_finite = true;
      break;
    }
    Vector g = sub(fv, v);
    const double res = norm2(g);
    rec.record(static_cast<std::size_t>(k), v, res);
    if (res <= cfg.tol) {
      trace.converged = true;
      break;
    }
    if (k == cfg.max_iter) break;
    if (!cfg.ridge) ridge = 1e-14 * res * res;

    if (k > 0 && m > 0) {
      dv_hist.push_back(sub(v, prev_v));
      dg_hist.push_back(sub(g, prev_g));
      if (dv_hist.size() > m) {
        dv_hist.pop_front();
        dg_hist.pop_front();
      }
    }
    prev_v = v;
    prev_g = g;

    Vector next;
    bool extrapolated = false;
    if (!dv_hist.empty()) {
      const std::size_t n = v.size();
      const std::size_t w = dv_hist.size();
      Matrix dG(n, w);
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t i = 0; i < n; ++i) dG(i, j) = dg_hist[j][i];
      Vector gamma;
      try {
        if (cfg.anderson_type == AndersonType::kTypeII) {
          gamma = lstsq_ridge(dG, g, ridge);
        } else {
          Matrix lhs(w, w);
          Vector rhs(w, 0.0);
          for (std::size_t a = 0; a < w; ++a) {
            rhs[a] = dot(dv_hist[a], g);
            for (std::size_t b = 0; b < w; ++b) lhs(a, b) = dot(dv_hist[a], dg_hist[b]);
            lhs(a, a) += ridge;
          }
          gamma = solve_dense(lhs, rhs);
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kSingularMatrix) throw;
        // Degenerate window: drop the history and take a plain step.
        dv_hist.clear();
        dg_hist.clear();
      }
      if (!gamma.empty()) {
        next.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          double corr = 0.0;
          for (std::size_t j = 0; j < w; ++j) corr += (dv_hist[j][i] + beta * dg_hist[j][i]) * gamma[j];
          next[i] = v[i] + beta * g[i] - corr;
        }
        extrapolated = true;
      }
    }
    if (!extrapolated) {
      if (beta == 1.0) {
        next = std::move(fv);
      } else {
        next = v;
        axpy(beta, g, next);
      }
    } else if (problem.project) {
      problem.project(next);
    }
    v = std::move(next);
  }
  return trace;
}

/// Limited-memory good Broyden for g(v) = 0.
///
/// The root map is expected in the residual convention g(v) = v − F(v), whose
/// Jacobian is near the identity for a contractive F; the inverse-Jacobian
/// estimate starts at the identity there, so the first step is v − g(v) = F(v)
/// (the usual DEQ start with −I, written for the sign-flipped residual). At
/// most `memory` rank-one corrections are kept; a full buffer is cleared.
inline SolverTrace broyden(const FixedPointProblem& root, Vector v0, const SolverConfig& cfg) {
  cfg.validate();
  SolverTrace trace;
  detail::TraceRecorder rec(root, trace);
  const std::size_t m = static_cast<std::size_t>(cfg.memory);

  // H = I + Σ uᵢ wᵢᵀ
  std::deque<Vector> us, ws;
  auto apply_h = [&](const Vector& x) {
    Vector y = x;
    for (std::size_t i = 0; i < us.size(); ++i) axpy(dot(ws[i], x), us[i], y);
    return y;
  };
  auto apply_ht = [&](const Vector& x) {
    Vector y = x;
    for (std::size_t i = 0; i < us.size(); ++i) axpy(dot(us[i], x), ws[i], y);
    return y;
  };

  Vector v = std::move(v0);
  Vector gv = root.map(v);
  if (!all_finite(gv)) {
    trace.non_finite = true;
    return trace;
  }
  for (int k = 0;; ++k) {
    const double res = norm2(gv);
    rec.record(static_cast<std::size_t>(k), v, res);
    if (res <= cfg.tol) {
      trace.converged = true;
      break;
    }
    if (k == cfg.max_iter) break;

    Vector step = scaled(-1.0, apply_h(gv));
    Vector next = add(v, step);
    if (root.project) {
      root.project(next);
      step = sub(next, v);
    }
    Vector gnext = root.map(next);
    if (!all_finite(gnext)) {
      trace.non_finite = true;
      break;
    }
    if (m > 0) {
      const Vector dg = sub(gnext, gv);
      const Vector h_dg = apply_h(dg);
      const double denom = dot(step, h_dg);
      if (std::abs(denom) > 1e-300 && std::isfinite(denom)) {
        Vector u = sub(step, h_dg);
        for (double& x : u) x /= denom;
        Vector w = apply_ht(step);
        // A full buffer restarts from the initial H; dropping the oldest
        // pair alone leaves an inconsistent inverse and can diverge.
        if (us.size() == m) {
          us.clear();
          ws.clear();
        }
        us.push_back(std::move(u));
        ws.push_back(std::move(w));
      }
    }
    v = std::move(next);
    gv = std::move(gnext);
  }
  return trace;
}

/// Root-finding view of a fixed-point problem: g(v) = v − F(v).
inline FixedPointProblem as_root_problem(const FixedPointProblem& fp) {
  FixedPointProblem root = fp;
  root.map = [map = fp.map](const Vector& v) { return sub(v, map(v)); };
  return root;
}

/// Dispatches on cfg.kind; Broyden runs on v − F(v).
inline SolverTrace solve_fixed_point(const FixedPointProblem& problem, Vector v0, const SolverConfig& cfg) {
  switch (cfg.kind) {
    case SolverKind::kNaive: return iterate_naive(problem, std::move(v0), cfg);
    case SolverKind::kAnderson: return anderson(problem, std::move(v0), cfg);
    case SolverKind::kBroyden: return broyden(as_root_problem(problem), std::move(v0), cfg);
  }
  return {};
}

/// Index of the least-cost iterate among those whose KKT norm is within a
/// factor c of the best KKT norm in the trace. Earliest index wins ties; NaN
/// KKT norms (no KKT information) leave every iterate admissible.
inline std::size_t select_iterate(std::span<const double> costs, std::span<const double> kkt_norms, double c) {
  require(!costs.empty(), ErrorCode::kInvalidArgument, "select_iterate on an empty trace");
  check_same_size(costs.size(), kkt_norms.size(), "select_iterate");
  require(c >= 1.0, ErrorCode::kInvalidArgument, "feasibility factor must be >= 1");
  double best_kkt = std::numeric_limits<double>::infinity();
  for (double k : kkt_norms)
    if (std::isfinite(k)) best_kkt = std::min(best_kkt, k);
  const bool have_kkt = std::isfinite(best_kkt);

  std::size_t best = costs.size();
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const bool admissible = !have_kkt || std::isinf(c) || !(kkt_norms[i] > c * best_kkt);
    if (!admissible || std::isnan(costs[i])) continue;
    if (best == costs.size() || costs[i] < costs[best]) best = i;
  }
  return best == costs.size() ? costs.size() - 1 : best;
}

inline std::size_t select_iterate(const SolverTrace& trace, double c) {
  const auto costs = trace.costs();
  const auto kkt = trace.kkt_norms();
  return select_iterate(costs, kkt, c);
}

}  // namespace jiio
