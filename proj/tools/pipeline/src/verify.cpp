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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <json.hpp>

#include "glowq/analysis.hpp"
#include "glowq/calib.hpp"
#include "glowq/errors.hpp"
#include "glowq/glxm.hpp"
#include "glowq/linalg.hpp"
#include "glowq/pipeline/pipeline.hpp"
#include "glowq/rng.hpp"

namespace glowq::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

bool VerifyReport::passed() const {
  return std::all_of(invariants.begin(), invariants.end(), [](const Invariant& i) { return i.passed; });
}

std::string VerifyReport::to_json() const {
  json list = json::array();
  for (const auto& i : invariants) {
    json item = {{"name", i.name}, {"scope", i.scope}, {"value", i.value}, {"limit", i.limit},
                 {"passed", i.passed}};
    if (!i.detail.empty()) item["detail"] = i.detail;
    list.push_back(std::move(item));
  }
  return json{{"schema_version", kSchemaVersion}, {"passed", passed()}, {"invariants", list}}.dump(2) + "\n";
}

namespace {

Invariant check(std::string name, std::string scope, double value, double limit) {
  // NaN never passes.
  return Invariant{std::move(name), std::move(scope), value, limit, value <= limit, {}};
}

Invariant broken(std::string name, std::string scope, std::string detail) {
  return Invariant{std::move(name), std::move(scope), 1.0, 0.0, false, std::move(detail)};
}

double rel(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Largest relative gap between paired singular values above a floor of
// 1e-6 * sigma_max; smaller ones are dominated by rounding of the factorisation.
double sigma_gap(const std::vector<double>& a, const std::vector<double>& b) {
  const double top = std::max(a.empty() ? 0.0 : a.front(), b.empty() ? 0.0 : b.front());
  double worst = 0.0;
  for (std::size_t j = 0; j < std::min(a.size(), b.size()); ++j) {
    if (std::max(a[j], b[j]) < 1e-6 * top) break;
    worst = std::max(worst, rel(a[j], b[j]));
  }
  return worst;
}

double off_diagonal_norm(const Matrix& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) {
      if (i != j) s += g(i, j) * g(i, j);
    }
  }
  return std::sqrt(s);
}

double diagonal_gap(const Matrix& g, std::span<const double> sigma) {
  return (g - Matrix::diagonal(sigma)).frobenius_norm() / std::max(g.frobenius_norm(), 1e-300);
}

}  // namespace

VerifyReport Pipeline::verify() {
  if (!fs::exists(weight_path(modules_.front().id))) gen();
  if (!fs::exists(quant_stem(modules_.front().id).concat(".json"))) quantize();
  if (!fs::exists(calib_stem(cfg_.model.hidden).concat(".json"))) calibrate();
  if (!fs::exists(factor_dir(groups_.front().group_id) / "factors.json")) solve();

  const std::size_t r = cfg_.solve.rank;
  std::vector<std::vector<Invariant>> per_group(groups_.size());
  parallel_for(groups_.size(), [&](std::size_t gi) {
    const LayerGroup& g = groups_[gi];
    auto& out = per_group[gi];
    const std::string& scope = g.group_id;
    const StackedError se = group_error(g);
    const Matrix cov = calibrated(in_dim(g));
    const PsdRoots roots = psd_roots(cov);
    const Matrix e = se.concatenated();

    std::optional<SharedFactors> stored;
    try {
      stored = load_factors(g);
      out.push_back(check("factors.readable", scope, 0.0, 0.0));
    } catch (const IoError&) {
      out.push_back(broken("factors.readable", scope, "factor files missing, truncated or malformed"));
    }
    if (stored) {
      const SharedFactors& f = *stored;
      const Matrix resid = e - f.stacked_a() * f.b_shared;
      const double weighted = f.whitened ? (resid * roots.sqrt).frobenius_norm() : resid.frobenius_norm();
      out.push_back(check("factors.residual_consistency", scope,
                          std::max(rel(weighted, f.residual_weighted),
                                   rel(resid.frobenius_norm(), f.residual_unweighted)),
                          1e-9));
      const Matrix ga = matmul_tn(f.stacked_a(), f.stacked_a());
      const Matrix gb = f.whitened ? f.b_shared * matmul_nt(cov, f.b_shared) : matmul_nt(f.b_shared, f.b_shared);
      const double scale = std::max(ga.frobenius_norm(), 1e-300);
      out.push_back(check("factors.balance", scope,
                          std::max((ga - gb).frobenius_norm(), off_diagonal_norm(ga)) / scale, 1e-8));
      if (cfg_.solve.mode == SolveMode::rsvd && cfg_.solve.power_iters >= 1 && f.whitened) {
        const double exact = qr_reduced_exact(se, cov, r).factors.residual_weighted;
        // The sketched residual can never undercut the optimum.
        out.push_back(check("solver.rsvd_optimality_floor", scope,
                            exact > 0.0 ? (exact - f.residual_weighted) / exact : 0.0, 1e-12));
      }
      if (!g.solo) {
        const WeightMap weights = group_weights(g);
        const Matrix x = sample_inputs(cov, cfg_.simulate.tokens, derive_seed(cfg_.seed, "verify.x"));
        std::vector<LayerFactors> dup;
        for (const auto& blk : f.a_blocks) dup.push_back({blk.module_id, blk.a, f.b_shared, 0.0, 0.0});
        CostLedger lc;
        CostLedger ll;
        const auto yc = cached_forward(x, g, weights, f, true, lc);
        const auto yl = layerwise_forward(x, g, weights, dup, true, ll);
        double diff = 0.0;
        for (std::size_t k = 0; k < yc.size(); ++k) diff = std::max(diff, max_abs_diff(yc[k].y, yl[k].y));
        out.push_back(check("runtime.cache_equivalence", scope, diff, 1e-12));
        const double ratio = static_cast<double>(ll.flops_right_proj) / static_cast<double>(lc.flops_right_proj);
        out.push_back(check("runtime.right_proj_ratio", scope, std::abs(ratio - static_cast<double>(g.size())), 0.0));
      }
      std::vector<std::size_t> outs;
      for (const auto& blk : se.blocks()) outs.push_back(blk.error.rows());
      const double expected = static_cast<double>(param_count(outs, se.input_dim(), f.rank, FactorMode::shared));
      out.push_back(check("runtime.param_closed_form", scope,
                          std::abs(static_cast<double>(param_count(f)) - expected), 0.0));
    }

    const double tail = svd(e).tail_norm(r);
    out.push_back(check("solver.eym_optimality", scope, rel(solve_unweighted(se, r).residual_unweighted, tail), 1e-8));
    const double lhs = (e * matmul_nt(cov, e)).trace();
    out.push_back(check("solver.bridge_identity", scope, rel(lhs, (e * roots.sqrt).squared_norm()), 1e-9));
    const RsvdSolution core_sol = qr_reduced_exact(se, cov, r);
    out.push_back(check("solver.core_equivalence", scope,
                        rel(core_sol.factors.residual_weighted,
                            solve_whitened_exact(se, cov, r).residual_weighted),
                        1e-8));
    out.push_back(check("solver.singular_values", scope,
                        sigma_gap(svd(core_sol.workspace.core).sigma, svd(e * roots.sqrt).sigma), 1e-9));
  });

  VerifyReport report;
  for (auto& v : per_group) report.invariants.insert(report.invariants.end(), v.begin(), v.end());

  // Range-finder and balance suites on the core of the first shared group.
  const auto shared = std::find_if(groups_.begin(), groups_.end(), [](const LayerGroup& g) { return !g.solo; });
  const LayerGroup& probe = shared != groups_.end() ? *shared : groups_.front();
  const Matrix core = qr_reduced_exact(group_error(probe), calibrated(in_dim(probe)), r).workspace.core;
  const std::size_t p = std::min(std::max<std::size_t>(cfg_.solve.oversampling, 2), core.cols() - r);
  if (p >= 2) {
    const std::vector<RangeTrialCell> grid{{p, 0}, {p, 1}, {p, 2}};
    const auto rows = rsvd_bound_trial(core, r, grid, cfg_.verify.trials, derive_seed(cfg_.seed, "verify.range"));
    const double bound = *rows[0].bound;
    report.invariants.push_back(check("rsvd.expectation_bound", probe.group_id,
                                      bound > 0.0 ? rows[0].mean_error / bound : 0.0, 1.05));
    double rise = 0.0;
    for (std::size_t k = 1; k < rows.size(); ++k) rise = std::max(rise, rows[k].mean_error - rows[k - 1].mean_error);
    report.invariants.push_back(check("rsvd.power_monotone", probe.group_id,
                                      rows[0].mean_error > 0.0 ? rise / rows[0].mean_error : 0.0, 1e-12));
  } else {
    report.invariants.push_back(broken("rsvd.expectation_bound", probe.group_id, "rank leaves no room for p >= 2"));
  }
  if (cfg_.solve.mode == SolveMode::rsvd && cfg_.solve.power_iters >= 1) {
    // Gapped control: the probe errors with everything past rank r damped
    // by 1e-3. Here the sketched solve must match the exact one.
    const StackedError se = group_error(probe);
    const Matrix e = se.concatenated();
    const Matrix head = svd(e).truncated(r);
    const Matrix gapped = head + 1e-3 * (e - head);
    std::vector<ErrorBlock> blocks;
    std::size_t row = 0;
    for (const auto& b : se.blocks()) {
      blocks.push_back({b.module_id, gapped.block(row, 0, b.error.rows(), gapped.cols())});
      row += b.error.rows();
    }
    const StackedError control = StackedError::stack(std::move(blocks));
    const Matrix cov = calibrated(in_dim(probe));
    SolveConfig sc;
    sc.rank = r;
    sc.oversampling = cfg_.solve.oversampling;
    sc.power_iters = cfg_.solve.power_iters;
    sc.seed = derive_seed(cfg_.seed, "verify.gapped");
    report.invariants.push_back(check("solver.rsvd_exact_gap", "gapped-control",
                                      rel(qr_reduced_rsvd(control, cov, sc).factors.residual_weighted,
                                          qr_reduced_exact(control, cov, r).factors.residual_weighted),
                                      1e-6));
  }
  const SvdResult s = svd(core);
  const Matrix u_r = s.u.leading_cols(r);
  const Matrix v_r = s.v.leading_cols(r);
  const std::span<const double> sigma_r(s.sigma.data(), r);
  const BalancedFactors bal = balanced_recovery(u_r, sigma_r, v_r);
  report.invariants.push_back(check("balanced.identities", probe.group_id,
                                    std::max(diagonal_gap(matmul_tn(bal.a_hat, bal.a_hat), sigma_r),
                                             diagonal_gap(matmul_nt(bal.b_hat, bal.b_hat), sigma_r)),
                                    1e-9));
  if (cfg_.covariance.source == CovSource::synthetic) {
    const auto eig = sym_eig(true_covariance(cfg_.model.hidden));
    const auto fit = fit_power_law(eig.values, default_tail_range(cfg_.model.hidden));
    report.invariants.push_back(check("gen.spectrum_fit", "run", std::abs(fit.alpha - cfg_.covariance.alpha), 1e-6));
  }

  glxm::write_text_atomic(root() / "verify.json", report.to_json());
  record("verify", {"verify.json"});
  return report;
}

}  // namespace glowq::pipeline
