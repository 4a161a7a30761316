// jiio_cli: experiment driver. Every subcommand reads a config (defaults plus
// optional file), writes CSVs into --out and exits 0 / 1 (usage or config) /
// 2 (numerical failure).

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "jiio/all.hpp"

namespace fs = std::filesystem;
using namespace jiio;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  unsigned threads = 0;
  bool timing = false;
  std::string checkpoint;
};

struct Context {
  RunConfig cfg;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool timing = false;
  fs::path out;
  std::string checkpoint;

  std::string path(const std::string& name) const { return (out / name).string(); }
};

Context make_context(const Common& c, const std::string& sub) {
  Context ctx;
  ctx.cfg = c.config_path.empty() ? parse_config_text("", sub) : parse_config(c.config_path, sub);
  if (c.seed) ctx.cfg.set("run", "seed", std::to_string(*c.seed));
  if (c.threads) ctx.cfg.set("run", "threads", std::to_string(c.threads));
  ctx.seed = static_cast<std::uint64_t>(ctx.cfg.integer("run", "seed"));
  ctx.threads = static_cast<unsigned>(std::max<std::size_t>(1, ctx.cfg.count("run", "threads")));
  ctx.timing = c.timing;
  ctx.out = c.out;
  ctx.checkpoint = c.checkpoint;
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create output directory " + c.out);
  return ctx;
}

Activation activation(const RunConfig& cfg) {
  const std::string& a = cfg.str("model", "activation");
  if (a == "tanh") return Activation::kTanh;
  if (a == "linear") return Activation::kLinear;
  throw Error(ErrorCode::kInvalidArgument, "model.activation must be 'tanh' or 'linear'");
}

Model init_model(const Context& ctx, std::size_t input_dim, std::size_t output_dim) {
  SeededRng rng = SeededRng::derive(ctx.seed, 0x0de1);
  return Model::random(activation(ctx.cfg), ctx.cfg.count("model", "state_dim"), input_dim, output_dim,
                       ctx.cfg.num("model", "gamma"), rng, ctx.cfg.num("model", "input_scale"),
                       ctx.cfg.num("model", "bias_scale"));
}

/// The checkpoint when one is given and exists, otherwise a fresh model.
Model load_or_init(const Context& ctx, std::size_t input_dim, std::size_t output_dim) {
  if (!ctx.checkpoint.empty() && fs::exists(ctx.checkpoint)) {
    Model m = model_from_tensors(load_checkpoint(ctx.checkpoint)).first;
    check_same_size(m.input_dim(), input_dim, "checkpoint input dimension");
    check_same_size(m.output_dim(), output_dim, "checkpoint output dimension");
    return m;
  }
  return init_model(ctx, input_dim, output_dim);
}

void save_model(const Context& ctx, const Model& m, std::uint64_t step, const std::string& fallback) {
  const std::string path = ctx.checkpoint.empty() ? ctx.path(fallback) : ctx.checkpoint;
  save_checkpoint(model_tensors(m, {step, ctx.cfg.hash(), m.layer.kind()}), path);
}

SolverConfig solver_config(const RunConfig& cfg, bool eval) {
  SolverConfig s;
  const std::string& kind = cfg.str("solver", "kind");
  if (kind == "anderson") s.kind = SolverKind::kAnderson;
  else if (kind == "naive") s.kind = SolverKind::kNaive;
  else if (kind == "broyden") s.kind = SolverKind::kBroyden;
  else throw Error(ErrorCode::kInvalidArgument, "solver.kind must be anderson, naive or broyden");
  const std::string& type = cfg.str("solver", "anderson_type");
  if (type != "I" && type != "II") throw Error(ErrorCode::kInvalidArgument, "solver.anderson_type must be I or II");
  s.anderson_type = type == "I" ? AndersonType::kTypeI : AndersonType::kTypeII;
  s.max_iter = static_cast<int>(cfg.integer("solver", eval ? "eval_iter" : "max_iter"));
  s.tol = cfg.num("solver", "tol");
  s.memory = static_cast<int>(cfg.integer("solver", "memory"));
  s.beta = cfg.num("solver", "beta");
  s.validate();
  return s;
}

JiioConfig jiio_config(const RunConfig& cfg, bool eval) {
  JiioConfig j;
  j.solver = solver_config(cfg, eval);
  j.damping = Damping{cfg.num("damping", "alpha_z"), cfg.num("damping", "alpha_mu"), cfg.num("damping", "alpha_x"), {}};
  const std::size_t at = cfg.count("damping", "schedule_iter");
  if (eval && at > 0) j.damping.schedule = {{at, cfg.num("damping", "alpha_x_late")}};
  j.damping.validate();
  j.select_c = cfg.num("solver", "select_c");
  return j;
}

TrainConfig train_config(const Context& ctx) {
  TrainConfig t;
  t.steps = static_cast<int>(ctx.cfg.integer("train", "steps"));
  t.batch = ctx.cfg.count("train", "batch");
  t.lr = ctx.cfg.num("train", "lr");
  t.gamma = ctx.cfg.num("model", "gamma");
  t.seed = SeededRng::derive(ctx.seed, 0x7a1).next_u64();
  t.threads = ctx.threads;
  return t;
}

/// Training and held-out image data (blobs or IDX).
std::pair<Dataset, Dataset> image_data(const Context& ctx) {
  const std::size_t count = ctx.cfg.count("data", "count");
  const std::size_t holdout = ctx.cfg.count("data", "holdout");
  const auto dseed = static_cast<std::uint64_t>(ctx.cfg.integer("data", "data_seed"));
  if (ctx.cfg.str("data", "source") == "idx") {
    Dataset all = load_idx_pair(ctx.cfg.str("data", "idx_images"), ctx.cfg.str("data", "idx_labels"), count + holdout);
    require(all.size() > holdout, ErrorCode::kInvalidArgument, "IDX file has too few items for the holdout");
    return {all.slice(0, all.size() - holdout), all.slice(all.size() - holdout, all.size())};
  }
  return {gen_blobs(count, dseed), gen_blobs(holdout, dseed + 1)};
}

std::pair<Dataset, Dataset> spiral_data(const Context& ctx) {
  const auto dseed = static_cast<std::uint64_t>(ctx.cfg.integer("data", "data_seed"));
  if (ctx.cfg.str("data", "source") == "idx") return image_data(ctx);
  return {gen_spirals(ctx.cfg.count("data", "count"), dseed), gen_spirals(ctx.cfg.count("data", "holdout"), dseed + 1)};
}

MetricsTable step_table(const std::vector<StepMetrics>& m, const std::string& aux) {
  MetricsTable t{{"step", "loss", aux}, {}};
  for (const auto& r : m) t.add({static_cast<double>(r.step), r.loss, r.aux});
  return t;
}

GenerativeConfig generative_config(const Context& ctx) {
  GenerativeConfig g;
  g.train = train_config(ctx);
  g.jiio = jiio_config(ctx.cfg, false);
  g.lambda = ctx.cfg.num("train", "lambda");
  g.hutchinson_samples = static_cast<int>(ctx.cfg.integer("train", "hutchinson_samples"));
  return g;
}

void report(const std::string& msg) { std::fprintf(stdout, "%s\n", msg.c_str()); }

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_fit_gen(const Context& ctx) {
  auto [train, held] = image_data(ctx);
  Model m = load_or_init(ctx, ctx.cfg.count("model", "input_dim"), train.dim());
  TrainResult r = train_generative(train, std::move(m), generative_config(ctx));
  emit_metrics_csv(step_table(r.metrics, "jacobian_reg"), ctx.path("metrics.csv"));
  if (!held.empty()) {
    const LatentFit f = fit_latent(r.model, held.items.front(), jiio_config(ctx.cfg, true));
    emit_trace_csv(f.trace, ctx.path("trace.csv"), ctx.timing);
  }
  save_model(ctx, r.model, static_cast<std::uint64_t>(r.metrics.size()), "model.ckpt");
  char buf[128];
  std::snprintf(buf, sizeof buf, "fit-gen: %zu steps, final batch mse %.6g", r.metrics.size(),
                r.metrics.empty() ? 0.0 : r.metrics.back().loss);
  report(buf);
  return 0;
}

int cmd_latent(const Context& ctx) {
  auto [train, held] = image_data(ctx);
  (void)train;
  require(!held.empty(), ErrorCode::kInvalidArgument, "latent needs data.holdout >= 1");
  const Model m = load_or_init(ctx, ctx.cfg.count("model", "input_dim"), held.dim());
  const JiioConfig jc = jiio_config(ctx.cfg, true);
  std::vector<LatentFit> fits(held.size());
  parallel_for(held.size(), ctx.threads, [&](std::size_t i) { fits[i] = fit_latent(m, held.items[i], jc); });
  MetricsTable t{{"item", "cost", "mse", "psnr", "f_evals", "vjp_evals"}, {}};
  for (std::size_t i = 0; i < fits.size(); ++i)
    t.add({static_cast<double>(i), fits[i].cost, mean_squared_error(held.items[i], fits[i].reconstruction),
           psnr(held.items[i], fits[i].reconstruction), static_cast<double>(fits[i].counters.f_evals),
           static_cast<double>(fits[i].counters.vjp_evals)});
  emit_metrics_csv(t, ctx.path("metrics.csv"));
  emit_trace_csv(fits.front().trace, ctx.path("trace.csv"), ctx.timing);
  report("latent: fitted " + std::to_string(fits.size()) + " items");
  return 0;
}

OperatorSpec operator_spec(const Context& ctx, std::size_t side) {
  OperatorSpec s;
  s.height = s.width = side;
  s.window = ctx.cfg.count("inverse", "window");
  s.sigma = ctx.cfg.num("inverse", "sigma");
  const std::string& op = ctx.cfg.str("inverse", "operator");
  if (op == "noisy") s.kind = MeasurementOperator::Kind::kNoisyIdentity;
  else if (op == "mask") s.kind = MeasurementOperator::Kind::kMask;
  else if (op == "identity") s.kind = MeasurementOperator::Kind::kIdentity;
  else throw Error(ErrorCode::kInvalidArgument, "inverse.operator must be noisy, mask or identity");
  require(s.window <= side, ErrorCode::kInvalidArgument, "mask window larger than the image");
  return s;
}

int cmd_invprob(const Context& ctx, std::string mode) {
  if (mode.empty()) mode = ctx.cfg.str("inverse", "mode");
  if (mode != "unsup" && mode != "sup") throw Error(ErrorCode::kInvalidArgument, "--mode must be unsup or sup");
  auto [train, held] = image_data(ctx);
  require(!held.empty(), ErrorCode::kInvalidArgument, "invprob needs data.holdout >= 1");
  const std::size_t side = train.height ? train.height : static_cast<std::size_t>(std::lround(std::sqrt(train.dim())));
  const OperatorSpec spec = operator_spec(ctx, side);
  const Model untrained = load_or_init(ctx, ctx.cfg.count("model", "input_dim"), train.dim());
  TrainResult r;
  if (mode == "sup") {
    r = train_inverse_sup(train, spec, untrained, generative_config(ctx));
  } else {
    r = train_generative(train, untrained, generative_config(ctx));
  }
  emit_metrics_csv(step_table(r.metrics, "jacobian_reg"), ctx.path("train_metrics.csv"));

  const JiioConfig jc = jiio_config(ctx.cfg, true);
  struct Row {
    double psnr_obs, psnr_rec, hidden_before, hidden_after;
    SolverTrace trace;
  };
  std::vector<Row> rows(held.size());
  parallel_for(held.size(), ctx.threads, [&](std::size_t i) {
    SeededRng rng = SeededRng::derive(ctx.seed, 0x1a7e, i);
    const MeasurementOperator op = spec.make(rng);
    const Vector obs = observe(op, held.items[i], rng);
    InverseResult after = solve_inverse_unsup(r.model, obs, op, jc);
    Row row{psnr(held.items[i], obs), psnr(held.items[i], after.reconstruction), NAN, NAN, std::move(after.trace)};
    const auto hidden = op.hidden_indices();
    if (!hidden.empty()) {
      row.hidden_after = masked_mse(held.items[i], solve_inverse_unsup(r.model, obs, op, jc).reconstruction, hidden);
      row.hidden_before = masked_mse(held.items[i], solve_inverse_unsup(untrained, obs, op, jc).reconstruction, hidden);
    }
    rows[i] = std::move(row);
  });
  MetricsTable t{{"item", "psnr_observed", "psnr_reconstruction", "hidden_mse_untrained", "hidden_mse_trained"}, {}};
  std::vector<double> po, pr;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.add({static_cast<double>(i), rows[i].psnr_obs, rows[i].psnr_rec, rows[i].hidden_before, rows[i].hidden_after});
    po.push_back(rows[i].psnr_obs);
    pr.push_back(rows[i].psnr_rec);
  }
  emit_metrics_csv(t, ctx.path("metrics.csv"));
  emit_trace_csv(rows.front().trace, ctx.path("trace.csv"), ctx.timing);
  save_model(ctx, r.model, static_cast<std::uint64_t>(r.metrics.size()), "model.ckpt");
  char buf[160];
  std::snprintf(buf, sizeof buf, "invprob %s: median PSNR observed %.3f dB, reconstruction %.3f dB", mode.c_str(),
                median(po), median(pr));
  report(buf);
  return 0;
}

AttackConfig attack_config(const Context& ctx) {
  AttackConfig a;
  a.eps = ctx.cfg.num("attack", "eps");
  a.jiio = jiio_config(ctx.cfg, false);
  a.pgd_steps = static_cast<int>(ctx.cfg.integer("attack", "pgd_steps"));
  a.pgd_step = ctx.cfg.num("attack", "pgd_step");
  return a;
}

Adversary adversary_from(const std::string& s) {
  if (s == "jiio") return Adversary::kJiio;
  if (s == "pgd") return Adversary::kPgd;
  if (s == "none") return Adversary::kNone;
  throw Error(ErrorCode::kInvalidArgument, "adversary must be jiio, pgd or none");
}

Model classifier(const Context& ctx, const Dataset& train) {
  if (!ctx.checkpoint.empty() && fs::exists(ctx.checkpoint)) return load_or_init(ctx, train.dim(), train.classes());
  AdvTrainConfig c;
  c.train = train_config(ctx);
  c.attack = attack_config(ctx);
  c.adversary = Adversary::kNone;
  return adv_train(train, init_model(ctx, train.dim(), train.classes()), c).model;
}

int cmd_attack(const Context& ctx, std::string method) {
  if (method.empty()) method = ctx.cfg.str("attack", "method");
  const Adversary adv = adversary_from(method);
  auto [train, held] = spiral_data(ctx);
  require(train.labeled() && !held.empty(), ErrorCode::kInvalidArgument, "attack needs labeled data and a holdout");
  const Model m = classifier(ctx, train);
  const AttackConfig ac = attack_config(ctx);
  const RobustEval clean = evaluate_robust(m, held, Adversary::kNone, ac, ctx.threads);
  const RobustEval attacked = evaluate_robust(m, held, adv, ac, ctx.threads);
  MetricsTable t{{"item", "label", "delta_norm", "clean_loss", "attacked_loss", "attacked_correct"}, {}};
  for (std::size_t i = 0; i < held.size(); ++i) {
    const Prediction pc = predict(m, held.items[i], held.labels[i]);
    const Prediction pa = predict(m, add(held.items[i], attacked.deltas[i]), held.labels[i]);
    t.add({static_cast<double>(i), static_cast<double>(held.labels[i]), norm2(attacked.deltas[i]), pc.loss, pa.loss,
           pa.label == held.labels[i] ? 1.0 : 0.0});
  }
  emit_metrics_csv(t, ctx.path("metrics.csv"));
  SolverTrace trace;
  if (adv == Adversary::kJiio) {
    trace = jiio_solve(attack_problem(m, held.items[0], held.labels[0], ac.eps), ac.jiio).trace;
  } else {
    const InputOptProblem p = attack_problem(m, held.items[0], held.labels[0], ac.eps);
    trace = sequential_input_opt(p, Vector(p.variable_dim(), 0.0), ac.pgd_steps,
                                 OptimizerState::pgd(ac.pgd_step_size(), p.constraint), ac.pgd)
                .trace;
  }
  emit_trace_csv(trace, ctx.path("trace.csv"), ctx.timing);
  char buf[160];
  std::snprintf(buf, sizeof buf, "attack %s: clean acc %.3f, robust acc %.3f, mean loss %.5g -> %.5g", method.c_str(),
                clean.accuracy, attacked.accuracy, clean.mean_loss, attacked.mean_loss);
  report(buf);
  return 0;
}

int cmd_advtrain(const Context& ctx, std::string adversary) {
  if (adversary.empty()) adversary = ctx.cfg.str("attack", "adversary");
  auto [train, held] = spiral_data(ctx);
  require(train.labeled() && !held.empty(), ErrorCode::kInvalidArgument, "advtrain needs labeled data and a holdout");
  AdvTrainConfig c;
  c.train = train_config(ctx);
  c.attack = attack_config(ctx);
  c.adversary = adversary_from(adversary);
  TrainResult r = adv_train(train, load_or_init(ctx, train.dim(), train.classes()), c);
  emit_metrics_csv(step_table(r.metrics, "unused"), ctx.path("train_metrics.csv"));
  MetricsTable t{{"eval_attack", "accuracy", "mean_loss"}, {}};
  for (Adversary a : {Adversary::kNone, Adversary::kJiio, Adversary::kPgd}) {
    const RobustEval e = evaluate_robust(r.model, held, a, c.attack, ctx.threads);
    t.add({static_cast<double>(a), e.accuracy, e.mean_loss});
  }
  emit_metrics_csv(t, ctx.path("metrics.csv"));
  const auto trace = jiio_solve(attack_problem(r.model, held.items[0], held.labels[0], c.attack.eps), c.attack.jiio).trace;
  emit_trace_csv(trace, ctx.path("trace.csv"), ctx.timing);
  save_model(ctx, r.model, static_cast<std::uint64_t>(r.metrics.size()), "model.ckpt");
  char buf[128];
  std::snprintf(buf, sizeof buf, "advtrain %s: robust acc jiio %.3f, pgd %.3f", adversary.c_str(), t.rows[1][1],
                t.rows[2][1]);
  report(buf);
  return 0;
}

int cmd_meta(const Context& ctx) {
  LinrealSpec spec;
  spec.feature_dim = ctx.cfg.count("meta", "feature_dim");
  spec.task_dim = ctx.cfg.count("meta", "task_dim");
  spec.support = ctx.cfg.count("meta", "support");
  spec.query = ctx.cfg.count("meta", "query");
  const auto tasks =
      gen_linreal_tasks(ctx.cfg.count("data", "count"), static_cast<std::uint64_t>(ctx.cfg.integer("data", "data_seed")), spec);
  require(!tasks.empty(), ErrorCode::kInvalidArgument, "meta needs data.count >= 1");
  MetaTrainConfig c;
  c.train = train_config(ctx);
  c.inner = jiio_config(ctx.cfg, false);
  TrainResult r = meta_train(tasks, load_or_init(ctx, spec.feature_dim + spec.task_dim, 2), c);
  emit_metrics_csv(step_table(r.metrics, "query_accuracy"), ctx.path("metrics.csv"));
  emit_trace_csv(meta_inner_solve(r.model, tasks.front(), c.inner).solve.trace, ctx.path("trace.csv"), ctx.timing);
  save_model(ctx, r.model, static_cast<std::uint64_t>(r.metrics.size()), "model.ckpt");
  char buf[128];
  std::snprintf(buf, sizeof buf, "meta: final query loss %.5g", r.metrics.empty() ? 0.0 : r.metrics.back().loss);
  report(buf);
  return 0;
}

int cmd_bench_solvers(const Context& ctx) {
  const AffineMap f = affine_contraction(ctx.cfg.count("bench", "dim"), ctx.cfg.num("bench", "radius"), ctx.seed);
  const auto runs = bench_solvers(f, static_cast<int>(ctx.cfg.integer("bench", "max_iter")), ctx.cfg.num("bench", "tol"),
                                  static_cast<int>(ctx.cfg.integer("solver", "memory")));
  const Vector exact = f.fixed_point();
  MetricsTable t{{"solver", "iterations", "converged", "final_residual", "error", "f_evals"}, {}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    t.add({static_cast<double>(i), static_cast<double>(r.trace.rows.back().iter), r.trace.converged ? 1.0 : 0.0,
           r.trace.rows.back().residual, norm2(sub(r.solution, exact)), static_cast<double>(r.trace.rows.back().f_evals)});
    emit_trace_csv(r.trace, ctx.path("trace_" + r.name + ".csv"), ctx.timing);
  }
  emit_metrics_csv(t, ctx.path("metrics.csv"));
  std::string msg = "bench-solvers:";
  for (const auto& r : runs) msg += " " + r.name + "=" + std::to_string(r.trace.rows.back().iter);
  report(msg);
  return 0;
}

int cmd_bench_efficiency(const Context& ctx) {
  SuiteSpec spec;
  spec.activation = activation(ctx.cfg);
  spec.state_dim = ctx.cfg.count("model", "state_dim");
  spec.input_dim = ctx.cfg.count("model", "input_dim");
  spec.gamma = ctx.cfg.num("model", "gamma");
  const auto suite = latent_suite(ctx.cfg.count("bench", "instances"), ctx.seed, spec);
  BaselineSpec b;
  b.steps = static_cast<int>(ctx.cfg.integer("bench", "baseline_steps"));
  b.lr = ctx.cfg.num("bench", "baseline_lr");
  b.sequential.forward.tol = ctx.cfg.num("bench", "forward_tol");
  b.sequential.adjoint.tol = ctx.cfg.num("bench", "adjoint_tol");
  JiioConfig jc = jiio_config(ctx.cfg, false);
  const EfficiencyReport rep = bench_efficiency(suite, jc, b, ctx.threads);
  emit_metrics_csv(efficiency_table(rep, ctx.timing), ctx.path("metrics.csv"));
  if (!rep.rows.empty()) {
    emit_trace_csv(rep.rows.front().jiio_trace, ctx.path("trace.csv"), ctx.timing);
    emit_trace_csv(rep.rows.front().baseline_trace, ctx.path("trace_baseline.csv"), ctx.timing);
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "bench-efficiency: %zu/%zu instances at ratio <= 0.5, total evals jiio %.0f vs baseline %.0f",
                rep.count_within(0.5), rep.rows.size(), rep.total_jiio_evals(), rep.total_baseline_evals());
  report(buf);
  return 0;
}

int cmd_gradcheck(const Context& ctx) {
  const std::size_t count = ctx.cfg.count("gradcheck", "instances");
  const double h = ctx.cfg.num("gradcheck", "fd_step");
  SuiteSpec spec;
  spec.activation = activation(ctx.cfg);
  spec.state_dim = ctx.cfg.count("model", "state_dim");
  spec.input_dim = ctx.cfg.count("model", "input_dim");
  spec.output_dim = ctx.cfg.count("gradcheck", "output_dim");
  spec.gamma = ctx.cfg.num("model", "gamma");
  const auto suite = latent_suite(count, ctx.seed, spec);
  const JiioConfig jc = jiio_config(ctx.cfg, false);
  MetricsTable t{{"instance", "kkt_norm", "reuse_vs_general", "reuse_vs_fd", "general_vs_fd", "neg_is_negation"}, {}};
  std::vector<std::vector<double>> rows(suite.size());
  parallel_for(suite.size(), ctx.threads, [&](std::size_t i) {
    const InputOptProblem& p = suite[i];
    const JiioResult r = jiio_solve(p, jc);
    const Vector gr = grad_theta_reuse(p, r.v).flatten();
    const Vector gg = grad_theta_general(p, r.v, OuterLoss::same_as_inner()).flatten();
    const Vector gn = grad_theta_reuse(p, r.v, OuterLoss::Kind::kNegOfInner).flatten();
    bool neg = true;
    for (std::size_t k = 0; k < gr.size(); ++k) neg = neg && gn[k] == -gr[k];
    const Model base{p.layer, p.head};
    const Vector fd = fd_gradient(
        [&](std::span<const double> th) {
          const Model m = Model::with_params(base, th);
          const InputOptProblem q{m.layer, m.head, p.loss, p.constraint, p.base_input};
          const JiioResult rr = jiio_solve(q, jc, &r.v);
          return true_cost(q, detail::make_ref(q).x(rr.v));
        },
        base.flatten(), h);
    rows[i] = {static_cast<double>(i), r.kkt_norm, relative_error(gr, gg), relative_error(gr, fd),
               relative_error(gg, fd), neg ? 1.0 : 0.0};
  });
  for (auto& r : rows) t.add(std::move(r));
  emit_metrics_csv(t, ctx.path("metrics.csv"));
  emit_trace_csv(jiio_solve(suite.front(), jc).trace, ctx.path("trace.csv"), ctx.timing);
  double worst = 0.0;
  for (const auto& r : t.rows) worst = std::max({worst, r[2], r[3], r[4]});
  char buf[96];
  std::snprintf(buf, sizeof buf, "gradcheck: worst relative disagreement %.3g", worst);
  report(buf);
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "config file (defaults apply to missing keys)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "run seed (overrides run.seed)");
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker threads (overrides run.threads)");
  sub->add_flag("--timing", c.timing, "write wall-clock nanoseconds into traces");
  sub->add_option("--checkpoint", c.checkpoint, "model checkpoint to load if present / save to");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint inference and input optimization for equilibrium models"};
  app.require_subcommand(1);
  Common common;
  std::string mode, method, adversary;
  bool print_config = false;

  std::map<std::string, std::function<int(const Context&)>> handlers{
      {"fit-gen", cmd_fit_gen},
      {"latent", cmd_latent},
      {"invprob", [&](const Context& c) { return cmd_invprob(c, mode); }},
      {"attack", [&](const Context& c) { return cmd_attack(c, method); }},
      {"advtrain", [&](const Context& c) { return cmd_advtrain(c, adversary); }},
      {"meta", cmd_meta},
      {"bench-solvers", cmd_bench_solvers},
      {"bench-efficiency", cmd_bench_efficiency},
      {"gradcheck", cmd_gradcheck},
  };
  const std::map<std::string, std::string> help{
      {"fit-gen", "train a generative model on image data"},
      {"latent", "fit latents for held-out images"},
      {"invprob", "denoising / inpainting with a DEQ prior"},
      {"attack", "attack a classifier with JIIO or PGD"},
      {"advtrain", "adversarially train a classifier"},
      {"meta", "meta-learn with a shared task vector"},
      {"bench-solvers", "compare fixed-point solvers on an affine contraction"},
      {"bench-efficiency", "JIIO vs sequential Adam evaluation counts"},
      {"gradcheck", "reuse / general / finite-difference gradient agreement"},
  };
  for (const auto& name : subcommands()) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    add_common(sub, common);
    sub->add_flag("--print-config", print_config, "print the resolved config and exit");
    if (name == "invprob") sub->add_option("--mode", mode, "unsup or sup")->check(CLI::IsMember({"unsup", "sup"}));
    if (name == "attack") sub->add_option("--method", method, "jiio or pgd")->check(CLI::IsMember({"jiio", "pgd"}));
    if (name == "advtrain")
      sub->add_option("--adversary", adversary, "jiio, pgd or none")->check(CLI::IsMember({"jiio", "pgd", "none"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const Context ctx = make_context(common, name);
    if (print_config) {
      std::fputs(ctx.cfg.dump().c_str(), stdout);
      return 0;
    }
    return handlers.at(name)(ctx);
  } catch (const Error& e) {
    std::fprintf(stderr, "jiio_cli %s: %s\n", name.c_str(), e.what());
    return e.numerical() ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "jiio_cli %s: %s\n", name.c_str(), e.what());
    return 1;
  }
}
