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

#ifndef GLOWQ_SOLVER_HPP_
#define GLOWQ_SOLVER_HPP_

// Low-rank correction of stacked quantization errors.
//
// A group of modules that read the same input x has errors E_i (O_i x d).
// Stacking them gives E_cat (m x d, m = sum O_i). A single right factor
// B (r x d) is shared by the group and each module keeps its own left block
// A_i (O_i x r), so that W_i ~ W_q,i + A_i B.
//
// The weighted solvers minimise ||(E_cat - A B) Sigma^{1/2}||_F, which equals
// the expected output error E||(E_cat - A B) x||^2 under inputs with second
// moment Sigma. The unweighted solver is the Sigma = I special case.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glowq/linalg.hpp"
#include "glowq/matrix.hpp"

namespace glowq {

struct ErrorBlock {
  std::string module_id;
  Matrix error;  // O_i x d
};

/// Ordered group of error blocks sharing one input dimension.
class StackedError {
 public:
  /// Throws ShapeError on an empty list or mismatched input dimensions.
  static StackedError stack(std::vector<ErrorBlock> blocks);

  const std::vector<ErrorBlock>& blocks() const noexcept { return blocks_; }
  std::size_t total_rows() const noexcept { return total_rows_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t size() const noexcept { return blocks_.size(); }

  /// E_cat, rows concatenated in block order.
  Matrix concatenated() const;

 private:
  StackedError(std::vector<ErrorBlock> blocks, std::size_t rows, std::size_t dim)
      : blocks_(std::move(blocks)), total_rows_(rows), input_dim_(dim) {}

  std::vector<ErrorBlock> blocks_;
  std::size_t total_rows_;
  std::size_t input_dim_;
};

struct SolveConfig {
  std::size_t rank = 64;
  std::size_t oversampling = 16;
  std::size_t power_iters = 2;
  bool whiten = true;
  std::uint64_t seed = 0;
  /// Relative cutoff for pseudo-inverse roots; nullopt picks default_rank_tol.
  std::optional<double> rank_tol;

  /// Requires 1 <= rank <= min(m, d) and rank + oversampling <= d.
  void validate(std::size_t m, std::size_t d) const;
};

struct FactorBlock {
  std::string module_id;
  Matrix a;  // O_i x r
};

struct SharedFactors {
  std::vector<FactorBlock> a_blocks;
  Matrix b_shared;  // r x d
  std::size_t rank = 0;
  bool whitened = false;
  double residual_weighted = 0.0;
  double residual_unweighted = 0.0;

  Matrix stacked_a() const;
  /// Throws ValidationError for an unknown module.
  const Matrix& a_for(std::string_view module_id) const;
};

/// Intermediates of the QR-reduced randomized solve.
struct CoreWorkspace {
  Matrix q_e;         // m x k, orthonormal columns (k = min(m, d))
  Matrix r_e;         // k x d
  Matrix core;        // M = R_e Sigma^{1/2}, k x d
  Matrix sketch;      // Omega, d x (r + p)
  Matrix range;       // Q = orth(Y)
  Matrix compressed;  // B_small = Q^T M
  std::vector<double> core_sigma;  // singular values of B_small
};

struct RsvdSolution {
  SharedFactors factors;
  CoreWorkspace workspace;
};

struct BalancedFactors {
  Matrix a_hat;  // U_r diag(sigma^{1/2})
  Matrix b_hat;  // diag(sigma^{1/2}) V_r^T
};

/// Splits singular values evenly between the two factors, so that
/// a_hat^T a_hat = b_hat b_hat^T = diag(sigma_r). v_r holds V_r as columns.
BalancedFactors balanced_recovery(const Matrix& u_r, std::span<const double> sigma_r,
                                  const Matrix& v_r);

/// Eckart-Young optimum of ||E_cat - A B||_F at rank r.
SharedFactors solve_unweighted(const StackedError& se, std::size_t r);

/// Exact weighted optimum: rank-r SVD of E_cat Sigma^{1/2}, balanced, then
/// lifted with B = B_hat Sigma^{-1/2} (pseudo-inverse root when singular).
SharedFactors solve_whitened_exact(const StackedError& se, const Matrix& cov, std::size_t r,
                                   std::optional<double> rank_tol = std::nullopt);

/// Orthonormal basis of range(m * sketch) after `power_iters` steps
/// Y <- m (m^T Q), each preceded by re-orthonormalisation.
Matrix randomized_range(const Matrix& m, const Matrix& sketch, std::size_t power_iters);

/// Thin QR of E_cat, core M = R_e Sigma^{1/2}, Gaussian range finder with
/// oversampling and re-orthonormalised power steps, small SVD, balanced
/// recovery and lifting. Deterministic for a fixed cfg.seed. When
/// cfg.whiten is false Sigma is replaced by the identity.
RsvdSolution qr_reduced_rsvd(const StackedError& se, const Matrix& cov, const SolveConfig& cfg);

/// Same reduction, but the core is factorised with the exact SVD.
RsvdSolution qr_reduced_exact(const StackedError& se, const Matrix& cov, std::size_t r,
                              std::optional<double> rank_tol = std::nullopt);

/// Q-less block fit A_i = E_i B^T (B B^T)^+, the minimum-norm solution of
/// min ||E_i - A_i B||_F.
Matrix block_recovery(const Matrix& e_i, const Matrix& b_star,
                      std::optional<double> rank_tol = std::nullopt);

/// Q-less block fit in the weighted metric:
/// A_i = E_i Sigma B^T (B Sigma B^T)^+. For lifted factors this reproduces
/// the rows of Q_e A_hat without keeping Q_e.
Matrix block_recovery_weighted(const Matrix& e_i, const Matrix& cov, const Matrix& b_star,
                               std::optional<double> rank_tol = std::nullopt);

/// Weighted least-squares left factor for a fixed right factor:
/// A = E Sigma B^T (B Sigma B^T)^+.
Matrix left_given_right_weighted(const Matrix& e, const Matrix& cov, const Matrix& b,
                                 std::optional<double> rank_tol = std::nullopt);

struct LayerFactors {
  std::string module_id;
  Matrix a;  // O_i x r
  Matrix b;  // r x d
  double residual_weighted = 0.0;
  double residual_unweighted = 0.0;
};

/// Independent per-module solve (the layerwise baseline).
LayerFactors layerwise_solve(const ErrorBlock& block, const Matrix& cov, std::size_t r,
                             bool whiten = true, std::optional<double> rank_tol = std::nullopt);

/// ||(E_cat - A B) Sigma^{1/2}||_F.
double weighted_residual(const StackedError& se, const Matrix& cov_sqrt,
                         const SharedFactors& factors);
double weighted_residual(const Matrix& e, const Matrix& cov_sqrt, const Matrix& a,
                         const Matrix& b);

/// Splits a stacked m x r left factor into per-module blocks.
std::vector<FactorBlock> split_rows(const StackedError& se, const Matrix& a);

}  // namespace glowq

#endif  // GLOWQ_SOLVER_HPP_
