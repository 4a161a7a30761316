#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>

#include "oracle.hpp"

using namespace jiio;

namespace {

std::vector<std::uint8_t> idx_header(std::uint32_t magic, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> b;
  auto be = [&b](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
  };
  be(magic);
  for (auto d : dims) be(d);
  return b;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIoError;
}

std::string scratch_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "jiio_harness_test";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Idx, ImageHeaderAndPayload) {
  auto b = idx_header(0x00000803, {2, 3, 4});
  for (int i = 0; i < 24; ++i) b.push_back(static_cast<std::uint8_t>(i == 5 ? 255 : i));
  const Dataset d = parse_idx(b);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.dim(), 12u);
  EXPECT_EQ(d.height, 3u);
  EXPECT_EQ(d.width, 4u);
  EXPECT_EQ(d.items[0][5], 1.0);
  EXPECT_EQ(d.items[1][0], 12.0 / 255.0);
  EXPECT_EQ(d.provenance, Provenance::kIdxFile);
}

TEST(Idx, Labels) {
  auto b = idx_header(0x00000801, {3});
  b.insert(b.end(), {7, 0, 9});
  EXPECT_EQ(parse_idx(b).labels, (std::vector<std::size_t>{7, 0, 9}));
}

TEST(Idx, Errors) {
  auto good = idx_header(0x00000803, {2, 3, 4});
  good.resize(good.size() + 23);
  EXPECT_EQ(code_of([&] { parse_idx(good); }), ErrorCode::kTruncatedFile);
  EXPECT_EQ(code_of([&] { parse_idx(idx_header(0x00000802, {1})); }), ErrorCode::kBadMagic);
  EXPECT_EQ(code_of([&] { parse_idx({0, 0, 8}); }), ErrorCode::kTruncatedFile);
  auto short_header = idx_header(0x00000803, {2, 3});
  EXPECT_EQ(code_of([&] { parse_idx(short_header); }), ErrorCode::kTruncatedFile);
  EXPECT_EQ(code_of([] { load_idx("/nonexistent/images.idx"); }), ErrorCode::kIoError);
}

TEST(Idx, FilePair) {
  auto img = idx_header(0x00000803, {3, 2, 2});
  for (int i = 0; i < 12; ++i) img.push_back(static_cast<std::uint8_t>(20 * i));
  auto lab = idx_header(0x00000801, {3});
  lab.insert(lab.end(), {1, 0, 1});
  const std::string ip = scratch_path("img.idx"), lp = scratch_path("lab.idx");
  std::ofstream(ip, std::ios::binary).write(reinterpret_cast<const char*>(img.data()), static_cast<long>(img.size()));
  std::ofstream(lp, std::ios::binary).write(reinterpret_cast<const char*>(lab.data()), static_cast<long>(lab.size()));
  const Dataset d = load_idx_pair(ip, lp, 2);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.labels, (std::vector<std::size_t>{1, 0}));
}

TEST(Synthetic, CountDeterminismAndRange) {
  EXPECT_TRUE(gen_blobs(0, 1).empty());
  EXPECT_TRUE(gen_spirals(0, 1).empty());
  EXPECT_TRUE(gen_linreal_tasks(0, 1).empty());
  const Dataset a = gen_blobs(30, 4), b = gen_blobs(30, 4);
  EXPECT_EQ(a.items, b.items);
  for (const auto& img : a.items) {
    EXPECT_EQ(img.size(), 64u);
    for (double v : img) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_NE(gen_blobs(30, 5).items, a.items);
  EXPECT_EQ(gen_spirals(20, 3).items, gen_spirals(20, 3).items);
  const auto t = gen_linreal_tasks(3, 2);
  EXPECT_EQ(t[1].support.inputs, gen_linreal_tasks(3, 2)[1].support.inputs);
}

TEST(Synthetic, LinrealLabelsFollowPlantedVector) {
  // Support and query are separate draws; both are consistent with one
  // linear rule in the features.
  for (const auto& task : gen_linreal_tasks(5, 9)) {
    EXPECT_EQ(task.support.size(), 5u);
    EXPECT_EQ(task.query.size(), 10u);
    for (const auto& s : task.support.inputs)
      for (const auto& q : task.query.inputs) EXPECT_NE(s, q);
  }
}

TEST(TraceCsv, GoldenHeaderAndRow) {
  SolverTrace t;
  TraceRow r;
  r.iter = 0;
  r.f_evals = 1;
  r.vjp_evals = 2;
  r.residual = 0.1;
  r.kkt_norm = 1.0 / 3.0;
  r.cost = std::numeric_limits<double>::quiet_NaN();
  r.wall_ns = 12345;
  t.rows.push_back(r);
  EXPECT_EQ(trace_csv(t),
            "iter,f_evals,vjp_evals,residual,kkt_norm,cost,wall_ns\n"
            "0,1,2,0.10000000000000001,0.33333333333333331,nan,0\n");
  EXPECT_EQ(trace_csv(t, true).substr(trace_csv(t, true).rfind(',') + 1), "12345\n");
}

TEST(TraceCsv, EmptyTraceIsHeaderOnly) {
  EXPECT_EQ(trace_csv({}), std::string(kTraceHeader) + "\n");
  const std::string path = scratch_path("empty.csv");
  emit_trace_csv({}, path);
  EXPECT_EQ(read_file_bytes(path).size(), std::string(kTraceHeader).size() + 1);
}

TEST(TraceCsv, RoundTripIsBitExact) {
  SeededRng rng(3);
  SolverTrace t;
  for (std::size_t i = 0; i < 100; ++i) {
    TraceRow r;
    r.iter = i;
    r.f_evals = i + 1;
    r.vjp_evals = 2 * (i + 1);
    r.residual = std::exp(rng.normal() * 20.0);
    r.kkt_norm = rng.normal() * 1e-300;
    r.cost = i % 7 ? -rng.normal() : std::numeric_limits<double>::infinity();
    t.rows.push_back(r);
  }
  const std::string text = trace_csv(t);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 101);
  const SolverTrace back = parse_trace_csv(text);
  ASSERT_EQ(back.size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.rows[i].residual), std::bit_cast<std::uint64_t>(t.rows[i].residual));
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.rows[i].kkt_norm), std::bit_cast<std::uint64_t>(t.rows[i].kkt_norm));
    EXPECT_EQ(back.rows[i].cost, t.rows[i].cost);
    EXPECT_EQ(back.rows[i].vjp_evals, t.rows[i].vjp_evals);
  }
  EXPECT_EQ(code_of([] { parse_trace_csv("iter,cost\n"); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { parse_trace_csv(std::string(kTraceHeader) + "\n1,2,3\n"); }), ErrorCode::kParseError);
}

TEST(MetricsCsv, NanIsNa) {
  MetricsTable t{{"a", "b"}, {}};
  t.add({1.0, std::numeric_limits<double>::quiet_NaN()});
  t.add({0.5, 2.0});
  EXPECT_EQ(metrics_csv(t), "a,b\n1,NA\n0.5,2\n");
  EXPECT_THROW(t.add({1.0}), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Model m = oracle::random_model(Activation::kTanh, 5, 3, 2, 0.9, 7);
  const CheckpointMeta meta{123456789012345ull, 0xfedcba9876543210ull, Activation::kTanh};
  const std::string path = scratch_path("model.ckpt");
  save_checkpoint(model_tensors(m, meta), path);
  const auto [back, bmeta] = model_from_tensors(load_checkpoint(path));
  EXPECT_EQ(back.flatten(), m.flatten());
  EXPECT_EQ(bmeta.step, meta.step);
  EXPECT_EQ(bmeta.config_hash, meta.config_hash);
  EXPECT_EQ(back.layer.kind(), Activation::kTanh);

  std::vector<NamedTensor> odd{{"nan", {2}, {std::numeric_limits<double>::quiet_NaN(), -0.0}}, {"scalar", {}, {4.5}}};
  const auto dec = decode_checkpoint(encode_checkpoint(odd));
  EXPECT_EQ(std::bit_cast<std::uint64_t>(dec[0].data[0]), std::bit_cast<std::uint64_t>(odd[0].data[0]));
  EXPECT_TRUE(std::signbit(dec[0].data[1]));
  EXPECT_EQ(dec[1], odd[1]);
}

TEST(Checkpoint, ZeroTensorsIsMagicPlusFooter) {
  const auto bytes = encode_checkpoint({});
  EXPECT_EQ(bytes, (std::vector<std::uint8_t>{'J', 'I', 'I', 'O', '1', '\n', 0, 0, 0, 0}));
  EXPECT_TRUE(decode_checkpoint(bytes).empty());
}

TEST(Checkpoint, Errors) {
  auto bytes = encode_checkpoint({{"w", {2, 2}, {1, 2, 3, 4}}});
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_checkpoint(bad); }), ErrorCode::kBadMagic);
  auto miscount = bytes;
  miscount.back() = 1;
  miscount[miscount.size() - 4] = 2;
  EXPECT_EQ(code_of([&] { decode_checkpoint(miscount); }), ErrorCode::kCorruptFooter);
  auto cut = bytes;
  cut.erase(cut.end() - 12, cut.end() - 4);
  EXPECT_EQ(code_of([&] { decode_checkpoint(cut); }), ErrorCode::kCorruptFooter);
  EXPECT_EQ(code_of([] { decode_checkpoint({'J', 'I', 'I', 'O', '1', '\n', 0}); }), ErrorCode::kCorruptFooter);
  EXPECT_EQ(code_of([] { model_from_tensors({}); }), ErrorCode::kMissingKey);
}

TEST(Config, EmptyFileGivesDefaults) {
  for (const auto& sub : subcommands()) EXPECT_EQ(parse_config_text("", sub), default_config(sub)) << sub;
  const RunConfig c = default_config("latent");
  EXPECT_EQ(c.num("damping", "alpha_x"), 0.01);
  EXPECT_EQ(c.num("damping", "alpha_z"), 0.8);
  EXPECT_EQ(c.num("damping", "alpha_mu"), 0.6);
  EXPECT_EQ(c.integer("solver", "memory"), 20);
  EXPECT_EQ(default_config("attack").integer("solver", "max_iter"), 80);
}

TEST(Config, IdempotentOverrideAndSections) {
  EXPECT_EQ(parse_config_text("[damping]\nalpha_x = 0.01\n", "latent"), default_config("latent"));
  EXPECT_EQ(parse_config_text("alpha_x = 0.01  # same as default\n", "latent"), default_config("latent"));
  const RunConfig c = parse_config_text("# comment\n\n[train]\nsteps = 7\n[solver]\nkind=broyden\n", "fit-gen");
  EXPECT_EQ(c.integer("train", "steps"), 7);
  EXPECT_EQ(c.str("solver", "kind"), "broyden");
  EXPECT_NE(c.hash(), default_config("fit-gen").hash());
}

TEST(Config, Errors) {
  try {
    parse_config_text("alpha_x 0.01\n", "latent");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  try {
    parse_config_text("\n[train]\nsteps = 3\n[bad section\n", "latent");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  EXPECT_EQ(code_of([] { parse_config_text("bogus = 1\n", "latent"); }), ErrorCode::kUnknownKey);
  EXPECT_EQ(code_of([] { parse_config_text("[train]\nalpha_x = 1\n", "latent"); }), ErrorCode::kUnknownKey);
  EXPECT_EQ(code_of([] { parse_config_text("[nope]\n", "latent"); }), ErrorCode::kUnknownKey);
  EXPECT_EQ(code_of([] { parse_config_text("[attack]\neps = 1\n", "latent"); }), ErrorCode::kUnknownKey);
  EXPECT_EQ(code_of([] { parse_config_text("[data]\nsource = idx\n", "latent"); }), ErrorCode::kMissingKey);
  EXPECT_EQ(code_of([] { default_config("latent").str("train", "nothing"); }), ErrorCode::kMissingKey);
  EXPECT_EQ(code_of([] { parse_config_text("[train]\nsteps = x\n", "latent").integer("train", "steps"); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { parse_config("/nonexistent.cfg", "latent"); }), ErrorCode::kIoError);
}

TEST(BenchEfficiency, ZeroStepBaselineIsNa) {
  const auto suite = latent_suite(2, 3);
  const EfficiencyReport rep = bench_efficiency(suite, JiioConfig{}, BaselineSpec{0, 0.05, {}});
  for (const auto& r : rep.rows) EXPECT_TRUE(std::isnan(r.ratio));
  EXPECT_EQ(rep.count_within(1e9), 0u);
  EXPECT_NE(metrics_csv(efficiency_table(rep, false)).find("NA"), std::string::npos);
}

TEST(BenchEfficiency, CountersMatchTraceSums) {
  const auto suite = latent_suite(3, 4);
  JiioConfig cfg;
  cfg.solver.max_iter = 100;
  const EfficiencyReport rep = bench_efficiency(suite, cfg, BaselineSpec{});
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.baseline_evals, r.baseline_trace_evals);
    // every Adam step is one forward solve and one adjoint solve
    EXPECT_EQ(r.baseline_trace.size(), 40u);
    if (!std::isnan(r.jiio_evals)) {
      EXPECT_EQ(std::fmod(r.jiio_evals, 3.0), 0.0);
    }
  }
  const EfficiencyReport again = bench_efficiency(suite, cfg, BaselineSpec{}, 3);
  EXPECT_EQ(metrics_csv(efficiency_table(rep, false)), metrics_csv(efficiency_table(again, false)));
}

TEST(BenchEfficiency, SelfComparisonHasEqualCounters) {
  // Sequential Adam against itself: the counter totals of two runs coincide.
  const auto suite = latent_suite(2, 5);
  for (const auto& p : suite) {
    const auto a = sequential_input_opt(p, Vector(p.variable_dim(), 0.0), 40, OptimizerState::adam(0.05));
    const auto b = sequential_input_opt(p, Vector(p.variable_dim(), 0.0), 40, OptimizerState::adam(0.05));
    EXPECT_EQ(a.counters, b.counters);
    EXPECT_EQ(a.trace.costs(), b.trace.costs());
  }
}

TEST(BenchSolvers, AffineContraction) {
  const AffineMap f = affine_contraction(20, 0.9, 1);
  const auto runs = bench_solvers(f, 300, 1e-6);
  const Vector star = f.fixed_point();
  EXPECT_EQ(runs[0].trace.rows.back().iter, 132u);
  for (const auto& r : runs) {
    EXPECT_TRUE(r.trace.converged) << r.name;
    EXPECT_LE(oracle::max_abs_diff(r.solution, star), 1e-5) << r.name;
  }
  EXPECT_LE(runs[2].trace.rows.back().iter, 30u);
}
