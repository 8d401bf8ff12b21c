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

#include "glowq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "glowq/errors.hpp"
#include "glowq/format.hpp"
#include "glowq/linalg.hpp"
#include "glowq/rng.hpp"

namespace glowq {

namespace {

constexpr std::size_t kRiskBatch = 4096;

Matrix orthonormal_rows(const Matrix& basis) {
  const Matrix q = orth(basis.transpose());
  if (q.cols() != basis.rows()) throw ShapeError("alignment_heatmap: basis is rank deficient");
  return q.transpose();
}

}  // namespace

EnergyCurve energy_capture_curve(const StackedError& se, const Matrix* cov,
                                 std::span<const std::size_t> ranks) {
  const std::size_t kmax = std::min(se.total_rows(), se.input_dim());
  if (ranks.empty()) throw ValidationError("energy_capture_curve: no ranks");
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] == 0 || ranks[i] > kmax || (i > 0 && ranks[i] <= ranks[i - 1])) {
      throw ValidationError("energy_capture_curve: ranks must increase inside [1, " +
                            std::to_string(kmax) + "]");
    }
  }
  Matrix target = se.concatenated();
  if (cov != nullptr) {
    if (!cov->is_square() || cov->rows() != se.input_dim()) {
      throw ShapeError("energy_capture_curve: covariance dim mismatch");
    }
    target = target * psd_sqrt(*cov, SqrtMode::sqrt);
  }
  const SvdResult s = svd(target);
  double total = 0.0;
  for (double v : s.sigma) total += v * v;
  EnergyCurve curve{{ranks.begin(), ranks.end()}, {}, cov != nullptr};
  double head = 0.0;
  std::size_t j = 0;
  for (std::size_t r : ranks) {
    for (; j < r; ++j) head += s.sigma[j] * s.sigma[j];
    curve.capture.push_back(total > 0.0 ? std::min(1.0, head / total) : 0.0);
  }
  return curve;
}

double factor_energy_capture(const Matrix& e, const Matrix& cov_sqrt, const Matrix& a,
                             const Matrix& b) {
  const double total = (e * cov_sqrt).squared_norm();
  if (total == 0.0) return 0.0;
  const double resid = weighted_residual(e, cov_sqrt, a, b);
  return 1.0 - resid * resid / total;
}

double mc_risk(const Matrix& m, const Matrix& cov, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples == 0) throw ValidationError("mc_risk: n_samples must be >= 1");
  if (!cov.is_square() || cov.rows() != m.cols()) throw ShapeError("mc_risk: covariance dim mismatch");
  const std::size_t d = cov.rows();
  const Matrix root = psd_sqrt(cov, SqrtMode::sqrt);
  double acc = 0.0;
  for (std::size_t start = 0; start < n_samples; start += kRiskBatch) {
    const std::size_t rows = std::min(kRiskBatch, n_samples - start);
    const Matrix x = gaussian_matrix(rows, d, seed, static_cast<std::uint64_t>(start) * d) * root;
    acc += matmul_nt(x, m).squared_norm();
  }
  return acc / static_cast<double>(n_samples);
}

std::vector<RangeTrialRow> rsvd_bound_trial(const Matrix& core, std::size_t r,
                                            std::span<const RangeTrialCell> grid,
                                            std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw ValidationError("rsvd_bound_trial: trials must be >= 1");
  if (r == 0 || r > std::min(core.rows(), core.cols())) {
    throw ValidationError("rsvd_bound_trial: rank out of range");
  }
  const SvdResult s = svd(core);
  const double tail = s.tail_norm(r);
  std::vector<RangeTrialRow> rows;
  for (const auto& cell : grid) {
    const std::size_t width = r + cell.oversampling;
    if (width > core.cols()) throw ValidationError("rsvd_bound_trial: r + p exceeds core width");
    RangeTrialRow row{cell.oversampling, cell.power_iters, trials, 0.0, tail, std::nullopt, {}};
    if (cell.oversampling >= 2) {
      row.bound = std::sqrt(1.0 + static_cast<double>(r) /
                                      static_cast<double>(cell.oversampling - 1)) * tail;
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const Matrix sketch = gaussian_matrix(core.cols(), width, derive_seed(seed, t));
      const Matrix q = randomized_range(core, sketch, cell.power_iters);
      const double err = (core - q * matmul_tn(q, core)).frobenius_norm();
      row.errors.push_back(err);
      sum += err;
    }
    row.mean_error = sum / static_cast<double>(trials);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::size_t> hungarian(const Matrix& c) {
  if (!c.is_square()) throw ShapeError("hungarian: cost matrix must be square");
  const std::size_t n = c.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path with potentials, minimising -c. Index 0 is a
  // sentinel column; rows and columns are 1-based inside the loop.
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0);  // match[col] = row
  std::vector<std::size_t> way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 1; j <= n; ++j) perm[match[j] - 1] = j - 1;
  return perm;
}

Matrix right_basis(const Matrix& m, std::size_t r) {
  if (r == 0 || r > std::min(m.rows(), m.cols())) throw ValidationError("right_basis: rank out of range");
  return svd(m).v.leading_cols(r).transpose();
}

AlignmentMap alignment_heatmap(std::string module_id, const Matrix& shared_basis,
                               const Matrix& module_basis) {
  if (shared_basis.rows() != module_basis.rows() || shared_basis.cols() != module_basis.cols()) {
    throw ShapeError("alignment_heatmap: bases differ in shape");
  }
  const Matrix vs = orthonormal_rows(shared_basis);
  const Matrix vm = orthonormal_rows(module_basis);
  const std::size_t r = vs.rows();
  Matrix raw = matmul_nt(vs, vm);
  for (double& x : raw.data()) x = std::min(1.0, std::abs(x));
  const auto perm = hungarian(raw);
  Matrix c(r, r);
  double diag = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) c(i, j) = raw(i, perm[j]);
    diag += c(i, i);
  }
  const Matrix ps = matmul_tn(vs, vs);
  const Matrix pm = matmul_tn(vm, vm);
  return AlignmentMap{std::move(module_id), std::move(c), perm,
                      diag / static_cast<double>(r), (ps - pm).frobenius_norm()};
}

std::string energy_curve_csv(const EnergyCurve& curve) {
  std::string out = "rank,capture,whitened\n";
  for (std::size_t k = 0; k < curve.ranks.size(); ++k) {
    out += std::to_string(curve.ranks[k]) + "," + format_double(curve.capture[k]) + "," +
           (curve.whitened ? "1" : "0") + "\n";
  }
  return out;
}

std::string range_trial_csv(std::span<const RangeTrialRow> rows) {
  std::string out = "p,q,trials,mean_error,eym_tail,bound\n";
  for (const auto& r : rows) {
    out += std::to_string(r.oversampling) + "," + std::to_string(r.power_iters) + "," +
           std::to_string(r.trials) + "," + format_double(r.mean_error) + "," +
           format_double(r.eym_tail) + "," + (r.bound ? format_double(*r.bound) : "") + "\n";
  }
  return out;
}

std::string alignment_csv(std::span<const AlignmentMap> maps) {
  std::string out = "module_id,row,col,value\n";
  for (const auto& m : maps) {
    for (std::size_t i = 0; i < m.c.rows(); ++i) {
      for (std::size_t j = 0; j < m.c.cols(); ++j) {
        out += m.module_id + "," + std::to_string(i) + "," + std::to_string(j) + "," +
               format_double(m.c(i, j)) + "\n";
      }
    }
  }
  return out;
}

}  // namespace glowq
