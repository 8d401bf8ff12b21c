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

#include "glowq/calib.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <string>

#include "glowq/errors.hpp"
#include "glowq/glxm.hpp"
#include "glowq/linalg.hpp"
#include "glowq/rng.hpp"

namespace glowq {

CovarianceAccumulator::CovarianceAccumulator(std::size_t dim)
    : dim_(dim), sum_outer_(dim == 0 ? 1 : dim, dim == 0 ? 1 : dim), sum_(dim, 0.0) {
  if (dim == 0) throw ValidationError("CovarianceAccumulator: dim must be > 0");
}

void CovarianceAccumulator::accumulate(const Matrix& x_batch) {
  if (x_batch.cols() != dim_) {
    throw ShapeError("accumulate: batch has " + std::to_string(x_batch.cols()) +
                     " columns, expected " + std::to_string(dim_));
  }
  accumulate(x_batch.data());
}

void CovarianceAccumulator::accumulate(std::span<const double> rows_data) {
  if (rows_data.size() % dim_ != 0) {
    throw ShapeError("accumulate: batch length is not a multiple of dim");
  }
  const std::size_t n = rows_data.size() / dim_;
  for (std::size_t s = 0; s < n; ++s) {
    const double* x = rows_data.data() + s * dim_;
    for (std::size_t i = 0; i < dim_; ++i) {
      if (!std::isfinite(x[i])) throw ValidationError("accumulate: non-finite sample");
      sum_[i] += x[i];
      const double xi = x[i];
      if (xi == 0.0) continue;
      double* row = sum_outer_.row(i).data();
      for (std::size_t j = i; j < dim_; ++j) row[j] += xi * x[j];
    }
  }
  // Only the upper triangle is accumulated; mirror it so the sum stays exactly symmetric.
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = 0; j < i; ++j) sum_outer_(i, j) = sum_outer_(j, i);
  }
  count_ += n;
}

void CovarianceAccumulator::merge(const CovarianceAccumulator& other) {
  if (other.dim_ != dim_) throw ShapeError("merge: dimension mismatch");
  sum_outer_ += other.sum_outer_;
  for (std::size_t i = 0; i < dim_; ++i) sum_[i] += other.sum_[i];
  count_ += other.count_;
}

namespace {

Matrix sample_moment(const CovarianceAccumulator& acc, MomentMode mode) {
  if (acc.count() == 0) throw ValidationError("finalize: no samples accumulated");
  const double inv_n = 1.0 / static_cast<double>(acc.count());
  Matrix s = inv_n * acc.sum_outer();
  if (mode == MomentMode::centered) {
    const std::size_t d = acc.dim();
    std::vector<double> mu(d);
    for (std::size_t i = 0; i < d; ++i) mu[i] = acc.sum()[i] * inv_n;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) s(i, j) -= mu[i] * mu[j];
    }
  }
  return s;
}

}  // namespace

double default_ridge_eps(const CovarianceAccumulator& acc) {
  const Matrix s = sample_moment(acc, MomentMode::second_moment);
  return kDefaultRidgeFactor * s.trace() / static_cast<double>(acc.dim());
}

CovarianceEstimate finalize(const CovarianceAccumulator& acc, double shrink_alpha,
                            double ridge_eps, MomentMode mode) {
  if (!(shrink_alpha >= 0.0 && shrink_alpha <= 1.0)) {
    throw ValidationError("finalize: shrink_alpha must lie in [0, 1]");
  }
  if (!(ridge_eps >= 0.0) || !std::isfinite(ridge_eps)) {
    throw ValidationError("finalize: ridge_eps must be finite and >= 0");
  }
  const std::size_t d = acc.dim();
  Matrix s = sample_moment(acc, mode);
  const double target = s.trace() / static_cast<double>(d);
  if (shrink_alpha != 0.0) s *= (1.0 - shrink_alpha);
  for (std::size_t i = 0; i < d; ++i) s(i, i) += shrink_alpha * target + ridge_eps;
  return CovarianceEstimate{std::move(s), shrink_alpha, ridge_eps, acc.count()};
}

void SpectrumModel::validate() const {
  if (dim == 0) throw ValidationError("SpectrumModel: dim must be > 0");
  if (!(exponent > 0.0) || !std::isfinite(exponent)) {
    throw ValidationError("SpectrumModel: exponent must be > 0");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("SpectrumModel: scale must be > 0");
}

std::vector<double> SpectrumModel::eigenvalues() const {
  validate();
  std::vector<double> lam(dim);
  for (std::size_t r = 0; r < dim; ++r) {
    lam[r] = scale * std::pow(static_cast<double>(r + 1), -exponent);
  }
  return lam;
}

Matrix synth_covariance(const SpectrumModel& model, std::uint64_t seed) {
  const auto lam = model.eigenvalues();
  const Matrix q = random_orthogonal(model.dim, seed);
  return symmetrize(matmul_nt(scale_cols(q, lam), q));
}

Matrix sample_inputs(const Matrix& cov, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_inputs: n must be >= 1");
  const Matrix root = psd_sqrt(cov, SqrtMode::sqrt);
  // root is symmetric, so z * root has rows (root z_k)^T.
  return gaussian_matrix(n, cov.rows(), seed) * root;
}

TailRange default_tail_range(std::size_t d) {
  TailRange tr{d / 8, d / 2};
  if (tr.end < tr.begin + 2) {
    tr.begin = 0;
    tr.end = std::min<std::size_t>(d, 2);
  }
  return tr;
}

PowerLawFit fit_power_law(std::span<const double> eigenvalues, TailRange range) {
  if (range.end > eigenvalues.size() || range.begin >= range.end ||
      range.end - range.begin < 2) {
    throw ValidationError("fit_power_law: need at least two points inside the eigenvalue list");
  }
  const std::size_t n = range.end - range.begin;
  std::vector<double> xs(n);
  std::vector<double> ys(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t idx = range.begin + k;
    const double lam = eigenvalues[idx];
    if (!(lam > 0.0)) throw ValidationError("fit_power_law: non-positive eigenvalue in range");
    xs[k] = std::log10(static_cast<double>(idx + 1));
    ys[k] = std::log10(lam);
  }
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double e = ys[k] - (intercept + slope * xs[k]);
    ss_res += e * e;
  }
  // A flat spectrum is fit exactly by a horizontal line.
  const double r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return PowerLawFit{-slope, r2};
}

void save_covariance(const std::filesystem::path& stem, const CovarianceEstimate& cov) {
  std::filesystem::path mat = stem;
  mat += ".glxm";
  std::filesystem::path side = stem;
  side += ".json";
  glxm::save(mat, cov.sigma);
  nlohmann::json meta = {
      {"format", "glowq.covariance"},
      {"version", 1},
      {"dim", cov.dim()},
      {"shrink_alpha", cov.shrink_alpha},
      {"ridge_eps", cov.ridge_eps},
      {"sample_count", cov.sample_count},
  };
  glxm::write_text_atomic(side, meta.dump(2) + "\n");
}

CovarianceEstimate load_covariance(const std::filesystem::path& stem) {
  std::filesystem::path mat = stem;
  mat += ".glxm";
  std::filesystem::path side = stem;
  side += ".json";
  CovarianceEstimate cov{glxm::load(mat)};
  try {
    const auto meta = nlohmann::json::parse(glxm::read_text(side));
    cov.shrink_alpha = meta.at("shrink_alpha").get<double>();
    cov.ridge_eps = meta.at("ridge_eps").get<double>();
    cov.sample_count = meta.at("sample_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(side.string() + ": " + e.what());
  }
  if (!cov.sigma.is_square()) throw IoError(mat.string() + ": covariance is not square");
  return cov;
}

}  // namespace glowq
