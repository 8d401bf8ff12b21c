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

#ifndef GLOWQ_ANALYSIS_HPP_
#define GLOWQ_ANALYSIS_HPP_

// Instruments for checking the solvers: energy-capture curves, Monte-Carlo
// risk, randomized range-finder trials, and subspace alignment maps.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glowq/matrix.hpp"
#include "glowq/solver.hpp"

namespace glowq {

struct EnergyCurve {
  std::vector<std::size_t> ranks;
  std::vector<double> capture;  // in [0, 1], non-decreasing
  bool whitened = false;
};

/// capture[k] = sum_{j <= ranks[k]} sigma_j^2 / sum_j sigma_j^2 of E_cat, or
/// of E_cat Sigma^{1/2} when cov is given. Ranks must be strictly increasing
/// inside [1, min(m, d)].
EnergyCurve energy_capture_curve(const StackedError& se, const Matrix* cov,
                                 std::span<const std::size_t> ranks);

/// 1 - ||(E - A B) S||_F^2 / ||E S||_F^2 with S = cov_sqrt: the share of
/// weighted energy that given factors remove. 0 when E S = 0.
double factor_energy_capture(const Matrix& e, const Matrix& cov_sqrt, const Matrix& a,
                             const Matrix& b);

/// (1/n) sum_k ||m x_k||^2 with x_k ~ N(0, cov), drawn from one counter
/// stream in batches so the value does not depend on batch size.
double mc_risk(const Matrix& m, const Matrix& cov, std::size_t n_samples, std::uint64_t seed);

struct RangeTrialCell {
  std::size_t oversampling = 0;
  std::size_t power_iters = 0;
};

struct RangeTrialRow {
  std::size_t oversampling = 0;
  std::size_t power_iters = 0;
  std::size_t trials = 0;
  double mean_error = 0.0;         // mean ||M - Q Q^T M||_F
  double eym_tail = 0.0;           // sqrt(sum_{j > r} sigma_j^2)
  std::optional<double> bound;     // (1 + r / (p - 1))^{1/2} * tail, p >= 2
  std::vector<double> errors;      // per-trial values, trial order
};

/// For every grid cell, runs `trials` range finders of width r + p on `core`.
/// Trial t uses the same sketch seed in every cell so cells can be compared
/// pairwise. Requires trials >= 1 and r + p <= cols.
std::vector<RangeTrialRow> rsvd_bound_trial(const Matrix& core, std::size_t r,
                                            std::span<const RangeTrialCell> grid,
                                            std::size_t trials, std::uint64_t seed);

/// Permutation perm maximising sum_j c(j, perm[j]). O(n^3). Throws
/// ShapeError for a non-square matrix.
std::vector<std::size_t> hungarian(const Matrix& c);

struct AlignmentMap {
  std::string module_id;
  Matrix c;  // r x r absolute cosines, columns reordered by `permutation`
  std::vector<std::size_t> permutation;  // column j of c is module basis vector permutation[j]
  double diag_mean = 0.0;                // mean of the matched diagonal
  double projector_distance = 0.0;       // ||P_shared - P_module||_F
};

/// Top-r right singular vectors of m as rows (r x d).
Matrix right_basis(const Matrix& m, std::size_t r);

/// Cross-basis absolute cosines between two r x d row bases, Hungarian
/// matched. Rows are re-orthonormalised first. Throws ShapeError when the
/// bases differ in shape or either is rank deficient.
AlignmentMap alignment_heatmap(std::string module_id, const Matrix& shared_basis,
                               const Matrix& module_basis);

/// Header: rank,capture,whitened.
std::string energy_curve_csv(const EnergyCurve& curve);
/// Header: p,q,trials,mean_error,eym_tail,bound (empty bound when p < 2).
std::string range_trial_csv(std::span<const RangeTrialRow> rows);
/// Header: module_id,row,col,value; one line per matrix entry.
std::string alignment_csv(std::span<const AlignmentMap> maps);

}  // namespace glowq

#endif  // GLOWQ_ANALYSIS_HPP_
