// Copyright 2026 The GlowQ Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "glowq/pipeline/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "glowq/calib.hpp"
#include "glowq/errors.hpp"
#include "glowq/glxm.hpp"
#include "glowq/linalg.hpp"
#include "glowq/quant.hpp"

namespace glowq::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kSmall = R"({
  "schema_version": 1,
  "seed": 11,
  "model": {"layers": 1, "hidden": 32, "kv_dim": 16, "intermediate": 48, "scale_spread": 0.5},
  "quant": {"bits": 3, "group_size": 16},
  "covariance": {"samples": 1024},
  "solve": {"rank": 8, "oversampling": 8, "power_iters": 2},
  "simulate": {"tokens": 8},
  "analyze": {"ranks": [2, 4, 8], "range_trials": 10},
  "verify": {"trials": 20}
})";

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("glowq_pipeline_test_" + name);
  fs::remove_all(p);
  return p;
}

PipelineConfig small(const std::string& dir) {
  PipelineConfig c = parse_config(kSmall);
  c.output_dir = fresh_dir(dir);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void run_until_solve(Pipeline& p) {
  p.gen();
  p.quantize();
  p.calibrate();
  p.solve();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "glowq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("glowq_pipeline_test_" + name + ".json");
  glxm::write_text_atomic(p, text);
  return p;
}

TEST(ConfigTest, ParsesDefaultsAndOverrides) {
  const auto c = parse_config(kSmall);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.model.modules().size(), 7u);
  EXPECT_EQ(c.sweep.metrics.size(), 5u);
  EXPECT_EQ(c.covariance.shrink_alpha, kDefaultShrinkAlpha);
  EXPECT_EQ(c.hash(), parse_config(kSmall).hash());
  auto other = c;
  other.seed = 12;
  EXPECT_NE(other.hash(), c.hash());
}

TEST(ConfigTest, RejectsMalformedDocuments) {
  EXPECT_THROW(parse_config("{"), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 2})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "sead": 3})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "solve": {"rank": 0}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "solve": {"rank": 60, "oversampling": 10}})"),
               ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "sweep": {"fractions": [0.5, 0.25]}})"),
               ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "sweep": {"metrics": ["gsvd"]}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "covariance": {"source": "file"}})"),
               ValidationError);
  EXPECT_THROW(parse_config(R"({"schema_version": 1, "model": {"layers": -1}})"), ValidationError);
}

TEST(ConfigTest, ValidationHappensBeforeAnyWrite) {
  const fs::path out = fresh_dir("no_write");
  const fs::path cfg = write_config("bad_rank", R"({"schema_version": 1, "solve": {"rank": 0}})");
  EXPECT_EQ(cli({"gen", "--config", cfg.string(), "--out", out.string()}), 1);
  EXPECT_FALSE(fs::exists(out));
}

TEST(GenTest, FixedSeedIsByteIdentical) {
  Pipeline a(small("gen_a"));
  Pipeline b(small("gen_b"));
  a.gen();
  b.gen();
  for (const auto& m : a.config().model.modules()) {
    EXPECT_EQ(slurp(a.weight_path(m.id)), slurp(b.weight_path(m.id)));
    const Matrix w = glxm::load(a.weight_path(m.id));
    EXPECT_EQ(w.rows(), m.out_dim);
    EXPECT_EQ(w.cols(), m.in_dim);
  }
  // The run directory is not part of the experiment, so manifests match too.
  EXPECT_EQ(slurp(a.root() / "manifest.json"), slurp(b.root() / "manifest.json"));
}

TEST(GenTest, CovarianceSpectrumMatchesConfiguredExponent) {
  Pipeline p(small("gen_fit"));
  p.gen();
  const Matrix cov = glxm::load(p.root() / "cov" / "true_d32.glxm");
  const auto eig = sym_eig(cov);
  EXPECT_NEAR(fit_power_law(eig.values, default_tail_range(32)).alpha, 1.19, 1e-8);
}

TEST(GenTest, ManifestRecordsHashSeedAndVersion) {
  Pipeline p(small("manifest"));
  p.gen();
  const json m = json::parse(slurp(p.root() / "manifest.json"));
  EXPECT_EQ(m.at("config_hash"), p.config().hash());
  EXPECT_EQ(m.at("seed"), 11u);
  EXPECT_TRUE(m.at("version").is_string());
  EXPECT_TRUE(m.at("artifacts").contains("gen"));
}

TEST(SolveTest, MissingInputsAreReported) {
  Pipeline p(small("missing"));
  EXPECT_THROW(p.solve(), IoError);
}

TEST(SolveTest, RerunGivesIdenticalResiduals) {
  Pipeline a(small("solve_a"));
  run_until_solve(a);
  const auto first = slurp(a.factor_dir("L0.attn") / "factors.json");
  a.solve();
  EXPECT_EQ(first, slurp(a.factor_dir("L0.attn") / "factors.json"));
}

TEST(SolveTest, UnwhitenedModeReproducesUnweightedSolve) {
  auto cfg = small("unwhitened");
  cfg.solve.whiten = false;
  cfg.solve.mode = SolveMode::exact;
  Pipeline p(cfg);
  run_until_solve(p);
  for (const auto& g : p.groups()) {
    std::vector<ErrorBlock> blocks;
    for (const auto& id : g.members()) {
      blocks.push_back({id, error_matrix(glxm::load(p.weight_path(id)), load_quantized(p.quant_stem(id)))});
    }
    const auto ref = solve_unweighted(StackedError::stack(blocks), cfg.solve.rank);
    const auto got = p.load_factors(g);
    EXPECT_FALSE(got.whitened);
    EXPECT_NEAR(got.residual_unweighted, ref.residual_unweighted, 1e-12 * ref.residual_unweighted);
  }
}

TEST(SolveTest, SketchedResidualNeverBeatsExact) {
  auto ce = small("exact_mode");
  ce.solve.mode = SolveMode::exact;
  Pipeline exact(ce);
  run_until_solve(exact);
  Pipeline sketched(small("rsvd_mode"));
  run_until_solve(sketched);
  for (const auto& g : exact.groups()) {
    EXPECT_GE(sketched.load_factors(g).residual_weighted,
              exact.load_factors(g).residual_weighted * (1.0 - 1e-12));
  }
}

TEST(SweepTest, FractionsPresentAndResidualMonotone) {
  Pipeline p(small("sweep"));
  run_until_solve(p);
  p.sweep();
  std::istringstream csv(slurp(p.root() / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "fraction,metric,residual,flops,params");
  std::map<std::string, std::vector<std::pair<double, double>>> curves;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string f, m, r;
    std::getline(row, f, ',');
    std::getline(row, m, ',');
    std::getline(row, r, ',');
    curves[m].push_back({std::stod(f), std::stod(r)});
  }
  EXPECT_EQ(curves.size(), 5u);
  for (const auto& [metric, pts] : curves) {
    ASSERT_EQ(pts.size(), 5u) << metric;
    EXPECT_EQ(pts.front().first, 0.0);
    EXPECT_EQ(pts[2].first, 0.5);
    EXPECT_EQ(pts.back().first, 1.0);
    for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_LE(pts[i].second, pts[i - 1].second) << metric;
  }
}

TEST(SimulateTest, LedgerMatchesClosedForms) {
  Pipeline p(small("simulate"));
  run_until_solve(p);
  p.simulate();
  std::istringstream csv(slurp(p.root() / "ledger.csv"));
  std::string line;
  std::getline(csv, line);
  std::map<std::pair<std::string, std::string>, std::vector<std::uint64_t>> rows;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string g, mode, cell;
    std::getline(row, g, ',');
    std::getline(row, mode, ',');
    std::vector<std::uint64_t> v;
    while (std::getline(row, cell, ',')) v.push_back(std::stoull(cell));
    rows[{g, mode}] = v;
  }
  const std::uint64_t t = 8, d = 32, r = 8;
  EXPECT_EQ(rows.at({"L0.attn", "cached"})[1], 2 * t * d * r);
  EXPECT_EQ(rows.at({"L0.attn", "layerwise"})[1], 3 * rows.at({"L0.attn", "cached"})[1]);
  EXPECT_EQ(rows.at({"L0.mlp", "layerwise"})[1], 2 * rows.at({"L0.mlp", "cached"})[1]);
  auto total = [](const std::vector<std::uint64_t>& v) { return v[0] + v[1] + v[2]; };
  EXPECT_LE(total(rows.at({"total", "selective"})), total(rows.at({"total", "cached"})));
  EXPECT_EQ(rows.at({"L0.attn", "cached"})[3], (32u + 16u + 16u) * r + r * d);
}

TEST(AnalyzeTest, WritesAllReports) {
  Pipeline p(small("analyze"));
  run_until_solve(p);
  p.analyze();
  for (const char* f : {"energy.csv", "alignment_whitened.csv", "alignment_unweighted.csv", "range_trials.csv"}) {
    EXPECT_TRUE(fs::exists(p.root() / "analysis" / f)) << f;
  }
}

TEST(VerifyTest, PassesTwiceWithIdenticalReports) {
  Pipeline p(small("verify"));
  const auto first = p.verify();
  EXPECT_TRUE(first.passed()) << first.to_json();
  const auto second = p.verify();
  EXPECT_EQ(first.to_json(), second.to_json());
}

TEST(VerifyTest, PerturbedFactorFailsNamedInvariant) {
  const fs::path out = fresh_dir("corrupt");
  const fs::path cfg = write_config("small", kSmall);
  ASSERT_EQ(cli({"verify", "--config", cfg.string(), "--out", out.string()}), 0);
  const fs::path b = out / "factors" / "L0.mlp" / "B.glxm";
  Matrix m = glxm::load(b);
  m(0, 0) += 1e-3;
  glxm::save(b, m);
  EXPECT_EQ(cli({"verify", "--config", cfg.string(), "--out", out.string()}), 3);
  const json report = json::parse(slurp(out / "verify.json"));
  bool found = false;
  for (const auto& inv : report.at("invariants")) {
    if (inv.at("name") == "factors.residual_consistency" && inv.at("scope") == "L0.mlp") {
      EXPECT_FALSE(inv.at("passed").get<bool>());
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(VerifyTest, TruncatedFactorFailsReadableInvariant) {
  const fs::path out = fresh_dir("truncated");
  const fs::path cfg = write_config("small", kSmall);
  ASSERT_EQ(cli({"verify", "--config", cfg.string(), "--out", out.string()}), 0);
  fs::resize_file(out / "factors" / "L0.o" / "B.glxm", 30);
  EXPECT_EQ(cli({"verify", "--config", cfg.string(), "--out", out.string()}), 3);
  const json report = json::parse(slurp(out / "verify.json"));
  bool found = false;
  for (const auto& inv : report.at("invariants")) {
    if (inv.at("name") == "factors.readable" && inv.at("scope") == "L0.o") {
      EXPECT_FALSE(inv.at("passed").get<bool>());
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(CliTest, ExitCodes) {
  const fs::path cfg = write_config("small", kSmall);
  EXPECT_EQ(cli({"gen"}), 1);
  EXPECT_EQ(cli({"bogus", "--config", cfg.string()}), 1);
  EXPECT_EQ(cli({"solve", "--config", cfg.string(), "--out", fresh_dir("cli_missing").string()}), 1);
  EXPECT_EQ(cli({"gen", "--config", cfg.string(), "--out", fresh_dir("cli_mode").string(), "--mode", "svd"}), 1);
  EXPECT_EQ(cli({"gen", "--config", cfg.string(), "--out", fresh_dir("cli_whiten").string(), "--whiten", "yes"}), 1);
  EXPECT_EQ(cli({"gen", "--config", cfg.string(), "--out", fresh_dir("cli_ok").string(), "--metric", "ner"}), 0);
}

TEST(ThreadsTest, BudgetFromEnvironment) {
  ::setenv("GLOWQ_THREADS", "nonsense", 1);
  EXPECT_EQ(thread_budget(), 1u);
  ::setenv("GLOWQ_THREADS", "2", 1);
  EXPECT_GE(thread_budget(), 1u);
  EXPECT_LE(thread_budget(), 2u);
  std::vector<int> hits(50, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(4, [](std::size_t i) {
                 if (i == 2) throw NumericalError("boom");
               }),
               NumericalError);
  ::unsetenv("GLOWQ_THREADS");
}

}  // namespace
}  // namespace glowq::pipeline
