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

#ifndef GLOWQ_LINALG_HPP_
#define GLOWQ_LINALG_HPP_

#include <cstddef>
#include <optional>
#include <vector>

#include "glowq/matrix.hpp"

namespace glowq {

struct ThinQrResult {
  Matrix q;  // m x n, orthonormal columns
  Matrix r;  // n x n, upper triangular, non-negative diagonal
};

/// Thin SVD. For an m x n input with k = min(m, n): u is m x k, v is n x k,
/// sigma has k entries sorted non-increasing. The first nonzero entry of every
/// column of v is non-negative.
struct SvdResult {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;

  /// u_r diag(sigma_r) v_r^T.
  Matrix truncated(std::size_t r) const;
  /// sqrt(sum_{j >= r} sigma_j^2).
  double tail_norm(std::size_t r) const;
};

struct SymEigResult {
  Matrix vectors;              // orthonormal columns
  std::vector<double> values;  // non-increasing
};

enum class SqrtMode { sqrt, inv_sqrt };

/// max(rows, cols) * 2^-52; multiplied by the largest eigen/singular value to
/// obtain the absolute cutoff used by pinv and the inverse square root.
double default_rank_tol(std::size_t rows, std::size_t cols) noexcept;

/// Householder thin QR. Requires rows >= cols.
ThinQrResult thin_qr(const Matrix& m);

/// One-sided Jacobi SVD (sweep cap 100, relative off-diagonal tolerance 1e-12).
/// Throws NumericalError if the sweep cap is reached without convergence.
SvdResult svd(const Matrix& m);

/// Cyclic Jacobi eigensolver for symmetric matrices.
SymEigResult sym_eig(const Matrix& s);

/// Square root or pseudo-inverse square root of a symmetric PSD matrix.
/// Eigenvalues at or above -1e-6 * lambda_max are clamped to zero; anything
/// more negative raises NumericalError. Eigenvalues below rank_tol * lambda_max
/// are treated as nullspace and map to zero in both modes.
Matrix psd_sqrt(const Matrix& s, SqrtMode mode, std::optional<double> rank_tol = std::nullopt);

/// Both roots from a single eigendecomposition.
struct PsdRoots {
  Matrix sqrt;
  Matrix inv_sqrt;
  std::size_t rank;
};
PsdRoots psd_roots(const Matrix& s, std::optional<double> rank_tol = std::nullopt);

/// Orthonormal basis for range(y). Rank-deficient columns are dropped, so the
/// result may have fewer columns than y (at most min(rows, cols)).
Matrix orth(const Matrix& y);

/// Moore-Penrose pseudoinverse; singular values below rank_tol * sigma_max
/// are treated as zero.
Matrix pinv(const Matrix& m, std::optional<double> rank_tol = std::nullopt);

/// Orthogonal projector onto the row space of m (n x n).
Matrix row_space_projector(const Matrix& m, std::optional<double> rank_tol = std::nullopt);

}  // namespace glowq

#endif  // GLOWQ_LINALG_HPP_
