#pragma once

// Benchmarks: JIIO against the sequential Adam baseline on latent fitting,
// and the fixed-point solvers against each other on an affine contraction.

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "jiio/baselines.hpp"
#include "jiio/core/linalg.hpp"
#include "jiio/core/parallel.hpp"
#include "jiio/core/rng.hpp"
#include "jiio/harness/csv.hpp"
#include "jiio/jiio.hpp"
#include "jiio/tasks/generative.hpp"

namespace jiio {

struct SuiteSpec {
  Activation activation = Activation::kTanh;
  std::size_t state_dim = 24;
  std::size_t input_dim = 8;
  std::size_t output_dim = 16;
  double gamma = 0.9;
  double target_noise = 0.05;
};

/// Random contractive models with targets h(z*(x₀)) + noise for a random x₀.
inline std::vector<InputOptProblem> latent_suite(std::size_t count, std::uint64_t seed, const SuiteSpec& spec = {}) {
  std::vector<InputOptProblem> suite;
  const SolverConfig fwd{SolverKind::kAnderson, 500, 1e-12, 20, 1.0, std::nullopt, AndersonType::kTypeII};
  for (std::size_t i = 0; i < count; ++i) {
    SeededRng rng = SeededRng::derive(seed, i, 0x5017e);
    Model m = Model::random(spec.activation, spec.state_dim, spec.input_dim, spec.output_dim, spec.gamma, rng);
    const Vector x0 = rng.normal_vector(spec.input_dim);
    Vector y = m.head.apply(forward_solve(m.layer, x0, fwd).z);
    for (double& v : y) v += spec.target_noise * rng.normal();
    suite.push_back(latent_problem(m, y));
  }
  return suite;
}

/// ℓ(h(z*(x))) with a converged forward solve; uncounted.
inline double true_cost(const InputOptProblem& p, std::span<const double> x) {
  const SolverConfig fwd{SolverKind::kAnderson, 500, 1e-11, 20, 1.0, std::nullopt, AndersonType::kTypeII};
  const ForwardResult f = forward_solve(p.layer, detail::make_ref(p).total_input(0, x), fwd);
  return loss_eval(p.loss, p.head, f.z);
}

struct BaselineSpec {
  int steps = 40;
  double lr = 0.05;
  SequentialConfig sequential;
};

struct EfficiencyRow {
  std::size_t instance = 0;
  double target_cost = std::numeric_limits<double>::quiet_NaN();  // baseline's final cost
  double baseline_evals = std::numeric_limits<double>::quiet_NaN();
  double jiio_evals = std::numeric_limits<double>::quiet_NaN();    // NaN: never reached
  double ratio = std::numeric_limits<double>::quiet_NaN();         // NaN: undefined
  double jiio_best_cost = std::numeric_limits<double>::quiet_NaN();
  double baseline_wall_ns = 0.0;
  double jiio_wall_ns = 0.0;
  /// Baseline counters re-derived from its per-step trace; equals baseline_evals.
  double baseline_trace_evals = std::numeric_limits<double>::quiet_NaN();
  SolverTrace jiio_trace;
  SolverTrace baseline_trace;
};

struct EfficiencyReport {
  std::vector<EfficiencyRow> rows;
  /// Instances with ratio ≤ the given bound.
  std::size_t count_within(double bound) const {
    std::size_t n = 0;
    for (const auto& r : rows)
      if (!std::isnan(r.ratio) && r.ratio <= bound) ++n;
    return n;
  }
  double total_baseline_evals() const {
    double s = 0.0;
    for (const auto& r : rows)
      if (!std::isnan(r.baseline_evals)) s += r.baseline_evals;
    return s;
  }
  double total_jiio_evals() const {
    double s = 0.0;
    for (const auto& r : rows)
      if (!std::isnan(r.jiio_evals)) s += r.jiio_evals;
    return s;
  }
};

/// For each instance: run the Adam baseline and take the cost at its last
/// evaluated iterate as the target, then count the layer evaluations (f + vjp) JIIO needs until the
/// true cost at its x-iterate first reaches the target.
inline EfficiencyReport bench_efficiency(const std::vector<InputOptProblem>& suite, const JiioConfig& jiio_cfg,
                                         const BaselineSpec& baseline, unsigned threads = 1) {
  require(!suite.empty(), ErrorCode::kInvalidArgument, "bench_efficiency needs a nonempty suite");
  EfficiencyReport report;
  report.rows.resize(suite.size());
  parallel_for(suite.size(), threads, [&](std::size_t i) {
    const InputOptProblem& p = suite[i];
    EfficiencyRow& row = report.rows[i];
    row.instance = i;
    if (baseline.steps <= 0) return;
    const std::size_t d = p.variable_dim();

    auto t0 = std::chrono::steady_clock::now();
    SequentialResult seq =
        sequential_input_opt(p, Vector(d, 0.0), baseline.steps, OptimizerState::adam(baseline.lr), baseline.sequential);
    row.baseline_wall_ns = static_cast<double>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count());
    row.target_cost = seq.trace.rows.back().cost;
    row.baseline_evals = static_cast<double>(seq.counters.total());
    row.baseline_trace_evals = static_cast<double>(seq.trace.rows.back().evals());

    JiioResult r = jiio_solve(p, jiio_cfg);
    row.jiio_best_cost = std::numeric_limits<double>::infinity();
    const auto ref = detail::make_ref(p);
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
      const double c = true_cost(p, ref.x(r.trace.iterates[k]));
      row.jiio_best_cost = std::min(row.jiio_best_cost, c);
      if (std::isnan(row.jiio_evals) && c <= row.target_cost) {
        row.jiio_evals = static_cast<double>(r.trace.rows[k].evals());
        row.jiio_wall_ns = static_cast<double>(r.trace.rows[k].wall_ns);
      }
    }
    row.ratio = std::isnan(row.jiio_evals) ? std::numeric_limits<double>::infinity()
                                           : row.jiio_evals / row.baseline_evals;
    row.jiio_trace = std::move(r.trace);
    row.baseline_trace = std::move(seq.trace);
  });
  return report;
}

inline MetricsTable efficiency_table(const EfficiencyReport& rep, bool timing) {
  MetricsTable t{{"instance", "target_cost", "baseline_evals", "jiio_evals", "ratio", "jiio_best_cost",
                  "baseline_wall_ns", "jiio_wall_ns"},
                 {}};
  for (const auto& r : rep.rows)
    t.add({static_cast<double>(r.instance), r.target_cost, r.baseline_evals, r.jiio_evals, r.ratio, r.jiio_best_cost,
           timing ? r.baseline_wall_ns : 0.0, timing ? r.jiio_wall_ns : 0.0});
  return t;
}

// ---------------------------------------------------------------------------
// Solver comparison on F(v) = Av + c
// ---------------------------------------------------------------------------

struct AffineMap {
  Matrix A;
  Vector c;

  Vector operator()(const Vector& v) const { return add(matvec(A, v), c); }
  Vector fixed_point() const { return solve_dense(Matrix::identity(c.size()) - A, c); }
};

/// A = radius · Q with Q random orthogonal, ‖c‖ = 1.
inline AffineMap affine_contraction(std::size_t n, double radius, std::uint64_t seed) {
  SeededRng rng(seed);
  AffineMap f{random_orthogonal(n, rng), rng.normal_vector(n)};
  f.A *= radius;
  const double nc = norm2(f.c);
  for (double& v : f.c) v /= nc;
  return f;
}

struct SolverRun {
  std::string name;
  SolverConfig cfg;
  SolverTrace trace;
  Vector solution;
};

inline std::vector<SolverRun> bench_solvers(const AffineMap& f, int max_iter, double tol, int memory = 20) {
  std::vector<SolverRun> runs{
      {"naive", {SolverKind::kNaive, max_iter, tol, 0, 1.0, std::nullopt, AndersonType::kTypeII}, {}, {}},
      {"anderson1", {SolverKind::kAnderson, max_iter, tol, memory, 1.0, std::nullopt, AndersonType::kTypeI}, {}, {}},
      {"anderson2", {SolverKind::kAnderson, max_iter, tol, memory, 1.0, std::nullopt, AndersonType::kTypeII}, {}, {}},
      {"broyden", {SolverKind::kBroyden, max_iter, tol, memory, 1.0, std::nullopt, AndersonType::kTypeII}, {}, {}}};
  for (auto& run : runs) {
    EvalCounters counters;
    FixedPointProblem fp;
    fp.map = [&f, &counters](const Vector& v) {
      ++counters.f_evals;
      return f(v);
    };
    fp.counters = &counters;
    run.trace = solve_fixed_point(fp, Vector(f.c.size(), 0.0), run.cfg);
    run.solution = run.trace.last_iterate();
  }
  return runs;
}

}  // namespace jiio
