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

#include "glowq/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "glowq/errors.hpp"
#include "glowq/rng.hpp"

namespace glowq {

namespace {

constexpr std::string_view kSketchTag = "sketch";

void require_rank(std::size_t r, std::size_t m, std::size_t d) {
  if (r == 0 || r > std::min(m, d)) {
    throw ValidationError("rank " + std::to_string(r) + " outside [1, " +
                          std::to_string(std::min(m, d)) + "]");
  }
}

void require_cov(const Matrix& cov, std::size_t d) {
  if (!cov.is_square() || cov.rows() != d) {
    throw ShapeError("covariance is " + std::to_string(cov.rows()) + "x" +
                     std::to_string(cov.cols()) + ", expected " + std::to_string(d) + "x" +
                     std::to_string(d));
  }
}

// Top-r truncation of an SVD; components beyond the available count are zero.
struct Truncation {
  Matrix u_r;
  std::vector<double> sigma_r;
  Matrix v_r;
};

Truncation truncate(const Matrix& u, const std::vector<double>& sigma, const Matrix& v,
                    std::size_t r) {
  Truncation t{Matrix(u.rows(), r), std::vector<double>(r, 0.0), Matrix(v.rows(), r)};
  const std::size_t k = std::min(r, sigma.size());
  for (std::size_t j = 0; j < k; ++j) {
    t.sigma_r[j] = sigma[j];
    for (std::size_t i = 0; i < u.rows(); ++i) t.u_r(i, j) = u(i, j);
    for (std::size_t i = 0; i < v.rows(); ++i) t.v_r(i, j) = v(i, j);
  }
  return t;
}

SharedFactors assemble(const StackedError& se, const Matrix& a, Matrix b, bool whitened,
                       const Matrix* cov_sqrt) {
  SharedFactors f{split_rows(se, a), std::move(b), 0, whitened, 0.0, 0.0};
  f.rank = f.b_shared.rows();
  const Matrix e = se.concatenated();
  const Matrix resid = e - a * f.b_shared;
  f.residual_unweighted = resid.frobenius_norm();
  f.residual_weighted = cov_sqrt ? (resid * *cov_sqrt).frobenius_norm() : f.residual_unweighted;
  return f;
}

PsdRoots whitening_roots(const Matrix& cov, std::optional<double> rank_tol) {
  return psd_roots(cov, rank_tol);
}

// Thin QR of E_cat when m >= d; otherwise E_cat already is a k x d core with
// Q_e = I_m.
std::pair<Matrix, Matrix> reduce(const Matrix& e) {
  if (e.rows() >= e.cols()) {
    ThinQrResult qr = thin_qr(e);
    return {std::move(qr.q), std::move(qr.r)};
  }
  return {Matrix::identity(e.rows()), e};
}

RsvdSolution finish_core(const StackedError& se, CoreWorkspace ws, const Matrix& u_small,
                         const std::vector<double>& sigma, const Matrix& v, std::size_t r,
                         bool whitened, const PsdRoots* roots) {
  Truncation t = truncate(u_small, sigma, v, r);
  BalancedFactors bal = balanced_recovery(t.u_r, t.sigma_r, t.v_r);
  Matrix a_star = ws.q_e * bal.a_hat;
  Matrix b_star = roots ? bal.b_hat * roots->inv_sqrt : std::move(bal.b_hat);
  ws.core_sigma = sigma;
  RsvdSolution out{assemble(se, a_star, std::move(b_star), whitened, roots ? &roots->sqrt : nullptr),
                   std::move(ws)};
  return out;
}

}  // namespace

StackedError StackedError::stack(std::vector<ErrorBlock> blocks) {
  if (blocks.empty()) throw ShapeError("stack: at least one block is required");
  const std::size_t d = blocks.front().error.cols();
  std::size_t rows = 0;
  for (const auto& b : blocks) {
    if (b.error.cols() != d) {
      throw ShapeError("stack: block '" + b.module_id + "' has input dim " +
                       std::to_string(b.error.cols()) + ", expected " + std::to_string(d));
    }
    rows += b.error.rows();
  }
  return StackedError(std::move(blocks), rows, d);
}

Matrix StackedError::concatenated() const {
  Matrix out(total_rows_, input_dim_);
  std::size_t r0 = 0;
  for (const auto& b : blocks_) {
    out.set_block(r0, 0, b.error);
    r0 += b.error.rows();
  }
  return out;
}

void SolveConfig::validate(std::size_t m, std::size_t d) const {
  require_rank(rank, m, d);
  if (rank + oversampling > d) {
    throw ValidationError("rank + oversampling (" + std::to_string(rank + oversampling) +
                          ") exceeds input dim " + std::to_string(d));
  }
  if (rank_tol && !(*rank_tol >= 0.0)) throw ValidationError("rank_tol must be >= 0");
}

Matrix SharedFactors::stacked_a() const {
  std::vector<Matrix> parts;
  parts.reserve(a_blocks.size());
  for (const auto& blk : a_blocks) parts.push_back(blk.a);
  return vstack(parts);
}

const Matrix& SharedFactors::a_for(std::string_view module_id) const {
  for (const auto& blk : a_blocks) {
    if (blk.module_id == module_id) return blk.a;
  }
  throw ValidationError("no left factor for module '" + std::string(module_id) + "'");
}

std::vector<FactorBlock> split_rows(const StackedError& se, const Matrix& a) {
  if (a.rows() != se.total_rows()) throw ShapeError("split_rows: row count mismatch");
  std::vector<FactorBlock> out;
  std::size_t r0 = 0;
  for (const auto& b : se.blocks()) {
    out.push_back({b.module_id, a.block(r0, 0, b.error.rows(), a.cols())});
    r0 += b.error.rows();
  }
  return out;
}

BalancedFactors balanced_recovery(const Matrix& u_r, std::span<const double> sigma_r,
                                  const Matrix& v_r) {
  const std::size_t r = sigma_r.size();
  if (u_r.cols() != r || v_r.cols() != r) throw ShapeError("balanced_recovery: rank mismatch");
  std::vector<double> root(r);
  for (std::size_t j = 0; j < r; ++j) {
    if (sigma_r[j] < 0.0) throw ValidationError("balanced_recovery: negative singular value");
    root[j] = std::sqrt(sigma_r[j]);
  }
  return BalancedFactors{scale_cols(u_r, root), scale_rows(v_r.transpose(), root)};
}

SharedFactors solve_unweighted(const StackedError& se, std::size_t r) {
  require_rank(r, se.total_rows(), se.input_dim());
  const Matrix e = se.concatenated();
  const SvdResult s = svd(e);
  Truncation t = truncate(s.u, s.sigma, s.v, r);
  BalancedFactors bal = balanced_recovery(t.u_r, t.sigma_r, t.v_r);
  return assemble(se, bal.a_hat, std::move(bal.b_hat), false, nullptr);
}

SharedFactors solve_whitened_exact(const StackedError& se, const Matrix& cov, std::size_t r,
                                   std::optional<double> rank_tol) {
  require_rank(r, se.total_rows(), se.input_dim());
  require_cov(cov, se.input_dim());
  const PsdRoots roots = whitening_roots(cov, rank_tol);
  const Matrix whitened = se.concatenated() * roots.sqrt;
  const SvdResult s = svd(whitened);
  Truncation t = truncate(s.u, s.sigma, s.v, r);
  BalancedFactors bal = balanced_recovery(t.u_r, t.sigma_r, t.v_r);
  return assemble(se, bal.a_hat, bal.b_hat * roots.inv_sqrt, true, &roots.sqrt);
}

Matrix randomized_range(const Matrix& m, const Matrix& sketch, std::size_t power_iters) {
  if (sketch.rows() != m.cols()) throw ShapeError("randomized_range: sketch has wrong row count");
  if (m.max_abs() == 0.0) return Matrix::identity(m.rows()).leading_cols(1);
  Matrix y = m * sketch;
  for (std::size_t step = 0; step < power_iters; ++step) {
    const Matrix q = orth(y);
    y = m * matmul_tn(m, q);
  }
  return orth(y);
}

RsvdSolution qr_reduced_rsvd(const StackedError& se, const Matrix& cov, const SolveConfig& cfg) {
  const std::size_t d = se.input_dim();
  cfg.validate(se.total_rows(), d);
  require_cov(cov, d);

  CoreWorkspace ws{Matrix(1, 1), Matrix(1, 1), Matrix(1, 1), Matrix(1, 1), Matrix(1, 1),
                   Matrix(1, 1), {}};
  std::tie(ws.q_e, ws.r_e) = reduce(se.concatenated());

  std::optional<PsdRoots> roots;
  if (cfg.whiten) {
    roots = whitening_roots(cov, cfg.rank_tol);
    ws.core = ws.r_e * roots->sqrt;
  } else {
    ws.core = ws.r_e;
  }
  const Matrix& m = ws.core;

  const std::size_t width = cfg.rank + cfg.oversampling;
  ws.sketch = gaussian_matrix(d, width, derive_seed(cfg.seed, kSketchTag));
  ws.range = randomized_range(m, ws.sketch, cfg.power_iters);
  ws.compressed = matmul_tn(ws.range, m);

  const SvdResult small = svd(ws.compressed);
  const Matrix u = ws.range * small.u;
  return finish_core(se, std::move(ws), u, small.sigma, small.v, cfg.rank, cfg.whiten,
                     roots ? &*roots : nullptr);
}

RsvdSolution qr_reduced_exact(const StackedError& se, const Matrix& cov, std::size_t r,
                              std::optional<double> rank_tol) {
  const std::size_t d = se.input_dim();
  require_rank(r, se.total_rows(), d);
  require_cov(cov, d);
  CoreWorkspace ws{Matrix(1, 1), Matrix(1, 1), Matrix(1, 1), Matrix(1, 1), Matrix(1, 1),
                   Matrix(1, 1), {}};
  std::tie(ws.q_e, ws.r_e) = reduce(se.concatenated());
  const PsdRoots roots = whitening_roots(cov, rank_tol);
  ws.core = ws.r_e * roots.sqrt;
  ws.range = Matrix::identity(ws.core.rows());
  ws.compressed = ws.core;
  const SvdResult s = svd(ws.core);
  return finish_core(se, std::move(ws), s.u, s.sigma, s.v, r, true, &roots);
}

Matrix block_recovery(const Matrix& e_i, const Matrix& b_star, std::optional<double> rank_tol) {
  if (e_i.cols() != b_star.cols()) throw ShapeError("block_recovery: input dim mismatch");
  const Matrix gram = matmul_nt(b_star, b_star);
  return matmul_nt(e_i, b_star) * pinv(gram, rank_tol);
}

Matrix left_given_right_weighted(const Matrix& e, const Matrix& cov, const Matrix& b,
                                 std::optional<double> rank_tol) {
  if (e.cols() != b.cols()) throw ShapeError("left_given_right_weighted: input dim mismatch");
  require_cov(cov, e.cols());
  const Matrix b_cov = b * cov;  // r x d
  const Matrix gram = symmetrize(matmul_nt(b_cov, b));
  return matmul_nt(e, b_cov) * pinv(gram, rank_tol);
}

Matrix block_recovery_weighted(const Matrix& e_i, const Matrix& cov, const Matrix& b_star,
                               std::optional<double> rank_tol) {
  return left_given_right_weighted(e_i, cov, b_star, rank_tol);
}

LayerFactors layerwise_solve(const ErrorBlock& block, const Matrix& cov, std::size_t r,
                             bool whiten, std::optional<double> rank_tol) {
  const StackedError single = StackedError::stack({block});
  SharedFactors f = whiten ? solve_whitened_exact(single, cov, r, rank_tol)
                           : solve_unweighted(single, r);
  LayerFactors out{block.module_id, std::move(f.a_blocks.front().a), std::move(f.b_shared),
                   f.residual_weighted, f.residual_unweighted};
  if (!whiten) {
    require_cov(cov, block.error.cols());
    const Matrix root = psd_sqrt(cov, SqrtMode::sqrt, rank_tol);
    out.residual_weighted = weighted_residual(block.error, root, out.a, out.b);
  }
  return out;
}

double weighted_residual(const Matrix& e, const Matrix& cov_sqrt, const Matrix& a,
                         const Matrix& b) {
  if (a.rows() != e.rows() || b.cols() != e.cols() || a.cols() != b.rows()) {
    throw ShapeError("weighted_residual: factor shapes do not match the error");
  }
  require_cov(cov_sqrt, e.cols());
  return ((e - a * b) * cov_sqrt).frobenius_norm();
}

double weighted_residual(const StackedError& se, const Matrix& cov_sqrt,
                         const SharedFactors& factors) {
  return weighted_residual(se.concatenated(), cov_sqrt, factors.stacked_a(), factors.b_shared);
}

}  // namespace glowq
