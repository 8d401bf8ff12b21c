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

#ifndef GLOWQ_CALIB_HPP_
#define GLOWQ_CALIB_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "glowq/matrix.hpp"

namespace glowq {

/// Running sums for the input second moment E[x x^T].
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return count_; }
  const Matrix& sum_outer() const noexcept { return sum_outer_; }
  std::span<const double> sum() const noexcept { return sum_; }

  /// Adds the rows of `x_batch` (n x dim).
  void accumulate(const Matrix& x_batch);
  /// Row-major batch of length n * dim; n may be zero.
  void accumulate(std::span<const double> rows_data);
  /// Associative merge of an independently accumulated shard.
  void merge(const CovarianceAccumulator& other);

 private:
  std::size_t dim_;
  Matrix sum_outer_;
  std::vector<double> sum_;
  std::size_t count_ = 0;
};

enum class MomentMode {
  /// (1/N) sum x x^T. Equals Cov(x) + mu mu^T, the quantity the usage-weighted
  /// risk depends on for nonzero-mean inputs.
  second_moment,
  /// (1/N) sum (x - mu)(x - mu)^T.
  centered,
};

struct CovarianceEstimate {
  Matrix sigma;
  double shrink_alpha = 0.0;
  double ridge_eps = 0.0;
  std::size_t sample_count = 0;

  std::size_t dim() const noexcept { return sigma.rows(); }
};

inline constexpr double kDefaultShrinkAlpha = 0.02;
inline constexpr double kDefaultRidgeFactor = 1e-6;

/// ridge_eps = 1e-6 * trace(S) / d for the accumulator's sample moment S.
double default_ridge_eps(const CovarianceAccumulator& acc);

/// (1 - alpha) S + alpha (tr S / d) I + ridge_eps I, with S = sum_outer / N.
CovarianceEstimate finalize(const CovarianceAccumulator& acc, double shrink_alpha,
                            double ridge_eps, MomentMode mode = MomentMode::second_moment);

/// Power-law eigenvalue model: lambda_r = scale * r^-exponent, r = 1..dim.
struct SpectrumModel {
  std::size_t dim = 0;
  double exponent = 1.0;
  double scale = 1.0;

  void validate() const;
  std::vector<double> eigenvalues() const;
};

/// Q diag(lambda) Q^T with Q a seeded random orthogonal matrix.
Matrix synth_covariance(const SpectrumModel& model, std::uint64_t seed);

/// n draws x = Sigma^{1/2} z, z ~ N(0, I), one per row.
Matrix sample_inputs(const Matrix& cov, std::size_t n, std::uint64_t seed);
inline Matrix sample_inputs(const CovarianceEstimate& cov, std::size_t n, std::uint64_t seed) {
  return sample_inputs(cov.sigma, n, seed);
}

/// Half-open index range [begin, end) into a descending eigenvalue list.
struct TailRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// [d/8, d/2), widened to at least two points when d is small.
TailRange default_tail_range(std::size_t d);

struct PowerLawFit {
  double alpha = 0.0;
  double r2 = 0.0;
};

/// Least-squares line through (log10 r, log10 lambda_r) over the range, with
/// r the 1-based rank. alpha is the negated slope.
PowerLawFit fit_power_law(std::span<const double> eigenvalues, TailRange range);

/// Sigma as GLXM plus `<stem>.json` holding alpha, eps and N.
void save_covariance(const std::filesystem::path& stem, const CovarianceEstimate& cov);
CovarianceEstimate load_covariance(const std::filesystem::path& stem);

}  // namespace glowq

#endif  // GLOWQ_CALIB_HPP_
