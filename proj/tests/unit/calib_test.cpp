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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "glowq/errors.hpp"
#include "glowq/linalg.hpp"
#include "glowq/rng.hpp"
#include "oracles.hpp"

namespace glowq {
namespace {

TEST(AccumulatorTest, EmptyBatchIsNoOp) {
  CovarianceAccumulator acc(3);
  acc.accumulate(std::span<const double>{});
  EXPECT_EQ(acc.count(), 0u);
  EXPECT_EQ(acc.sum_outer(), Matrix(3, 3));
}

TEST(AccumulatorTest, SingleSampleIsOuterProduct) {
  CovarianceAccumulator acc(3);
  acc.accumulate(Matrix::from_rows({{1, -2, 3}}));
  EXPECT_EQ(acc.count(), 1u);
  EXPECT_EQ(acc.sum_outer(), Matrix::from_rows({{1, -2, 3}, {-2, 4, -6}, {3, -6, 9}}));
}

TEST(AccumulatorTest, BatchSplitMatchesConcatenated) {
  const Matrix x = gaussian_matrix(40, 5, 3);
  CovarianceAccumulator whole(5);
  whole.accumulate(x);
  CovarianceAccumulator parts(5);
  parts.accumulate(x.block(0, 0, 13, 5));
  parts.accumulate(x.block(13, 0, 27, 5));
  EXPECT_EQ(parts.count(), 40u);
  EXPECT_LT(max_abs_diff(whole.sum_outer(), parts.sum_outer()), 1e-10);
  EXPECT_LT(max_abs_diff(whole.sum_outer(), matmul_tn(x, x)), 1e-10);
}

TEST(AccumulatorTest, MergeMatchesSequential) {
  const Matrix x = gaussian_matrix(30, 4, 8);
  CovarianceAccumulator a(4);
  CovarianceAccumulator b(4);
  a.accumulate(x.block(0, 0, 10, 4));
  b.accumulate(x.block(10, 0, 20, 4));
  a.merge(b);
  CovarianceAccumulator seq(4);
  seq.accumulate(x);
  EXPECT_EQ(a.count(), 30u);
  EXPECT_LT(max_abs_diff(a.sum_outer(), seq.sum_outer()), 1e-10);
}

TEST(AccumulatorTest, StaysExactlySymmetric) {
  CovarianceAccumulator acc(6);
  acc.accumulate(gaussian_matrix(17, 6, 1));
  const Matrix& s = acc.sum_outer();
  EXPECT_EQ(s, s.transpose());
}

TEST(AccumulatorTest, DimMismatchAndBadInput) {
  CovarianceAccumulator acc(3);
  EXPECT_THROW(acc.accumulate(Matrix(2, 4)), ShapeError);
  const std::vector<double> ragged{1, 2};
  EXPECT_THROW(acc.accumulate(ragged), ShapeError);
  EXPECT_THROW(CovarianceAccumulator(0), ValidationError);
  CovarianceAccumulator other(4);
  EXPECT_THROW(acc.merge(other), ShapeError);
}

TEST(FinalizeTest, NoShrinkIsSampleMoment) {
  const Matrix x = gaussian_matrix(50, 4, 2);
  CovarianceAccumulator acc(4);
  acc.accumulate(x);
  const auto est = finalize(acc, 0.0, 0.0);
  EXPECT_EQ(est.sigma, (1.0 / 50.0) * acc.sum_outer());
  EXPECT_EQ(est.sample_count, 50u);
}

TEST(FinalizeTest, FullShrinkIsIsotropic) {
  CovarianceAccumulator acc(4);
  acc.accumulate(gaussian_matrix(50, 4, 2));
  const double t = acc.sum_outer().trace() / 50.0;
  const auto est = finalize(acc, 1.0, 0.0);
  EXPECT_LT(max_abs_diff(est.sigma, (t / 4.0) * Matrix::identity(4)), 1e-15);
}

TEST(FinalizeTest, TracePreservedAcrossAlpha) {
  CovarianceAccumulator acc(8);
  acc.accumulate(gaussian_matrix(100, 8, 5));
  const double t0 = finalize(acc, 0.0, 0.0).sigma.trace();
  for (double a : {0.0, 0.02, 0.05, 0.5, 1.0}) {
    EXPECT_LT(oracle::rel_diff(finalize(acc, a, 0.0).sigma.trace(), t0), 1e-9) << a;
    const double eps = 0.125;
    EXPECT_LT(oracle::rel_diff(finalize(acc, a, eps).sigma.trace(), t0 + 8 * eps), 1e-9) << a;
  }
}

TEST(FinalizeTest, RidgeBoundsSmallestEigenvalue) {
  CovarianceAccumulator acc(6);
  acc.accumulate(gaussian_matrix(3, 6, 4));  // rank 3
  const double eps = 1e-3;
  const auto est = finalize(acc, 0.0, eps);
  const auto ev = oracle::eigenvalues(est.sigma);
  EXPECT_GE(ev.back(), eps - 1e-9);
}

TEST(FinalizeTest, CenteredModeSubtractsMean) {
  Matrix x = gaussian_matrix(200, 3, 6);
  for (std::size_t i = 0; i < 200; ++i) x(i, 0) += 5.0;
  CovarianceAccumulator acc(3);
  acc.accumulate(x);
  const auto raw = finalize(acc, 0.0, 0.0);
  const auto centered = finalize(acc, 0.0, 0.0, MomentMode::centered);
  double mu0 = 0.0;
  for (std::size_t i = 0; i < 200; ++i) mu0 += x(i, 0);
  mu0 /= 200.0;
  EXPECT_NEAR(raw.sigma(0, 0) - centered.sigma(0, 0), mu0 * mu0, 1e-10);
}

TEST(FinalizeTest, RejectsBadArguments) {
  CovarianceAccumulator acc(2);
  EXPECT_THROW(finalize(acc, 0.0, 0.0), ValidationError);
  acc.accumulate(Matrix::identity(2));
  EXPECT_THROW(finalize(acc, -0.1, 0.0), ValidationError);
  EXPECT_THROW(finalize(acc, 1.1, 0.0), ValidationError);
  EXPECT_THROW(finalize(acc, 0.0, -1.0), ValidationError);
}

TEST(FinalizeTest, DefaultRidgeScalesWithTrace) {
  CovarianceAccumulator acc(4);
  acc.accumulate(gaussian_matrix(20, 4, 1));
  const double t = acc.sum_outer().trace() / 20.0;
  EXPECT_NEAR(default_ridge_eps(acc), 1e-6 * t / 4.0, 1e-18);
}

TEST(SpectrumTest, SynthCovarianceHasModelEigenvalues) {
  for (double alpha : {0.77, 1.19}) {
    const SpectrumModel model{4, alpha, 2.5};
    const auto ev = oracle::eigenvalues(synth_covariance(model, 3));
    const auto lam = model.eigenvalues();
    for (std::size_t r = 0; r < 4; ++r) {
      EXPECT_LT(oracle::rel_diff(ev[r], 2.5 * std::pow(r + 1.0, -alpha)), 1e-8);
      EXPECT_DOUBLE_EQ(lam[r], 2.5 * std::pow(r + 1.0, -alpha));
    }
  }
}

TEST(SpectrumTest, InvalidModelRejected) {
  EXPECT_THROW((SpectrumModel{0, 1.0, 1.0}.validate()), ValidationError);
  EXPECT_THROW((SpectrumModel{3, 0.0, 1.0}.validate()), ValidationError);
  EXPECT_THROW((SpectrumModel{3, 1.0, -1.0}.validate()), ValidationError);
}

TEST(SampleInputsTest, IdentityCovarianceConverges) {
  const Matrix x = sample_inputs(Matrix::identity(4), 100000, 12);
  CovarianceAccumulator acc(4);
  acc.accumulate(x);
  const auto est = finalize(acc, 0.0, 0.0);
  EXPECT_LT((est.sigma - Matrix::identity(4)).frobenius_norm() / 2.0, 0.05);
}

TEST(SampleInputsTest, DeterministicAndRejectsZero) {
  const Matrix cov = synth_covariance({5, 1.0, 1.0}, 2);
  EXPECT_EQ(sample_inputs(cov, 10, 4), sample_inputs(cov, 10, 4));
  EXPECT_THROW(sample_inputs(cov, 0, 4), ValidationError);
}

TEST(PowerLawFitTest, ExactPowerLaw) {
  std::vector<double> lam(64);
  for (std::size_t r = 0; r < 64; ++r) lam[r] = std::pow(r + 1.0, -0.77);
  const auto fit = fit_power_law(lam, default_tail_range(64));
  EXPECT_NEAR(fit.alpha, 0.77, 1e-9);
  EXPECT_NEAR(fit.r2, 1.0, 1e-12);
}

TEST(PowerLawFitTest, FlatSpectrum) {
  const std::vector<double> lam(16, 3.0);
  const auto fit = fit_power_law(lam, default_tail_range(16));
  EXPECT_NEAR(fit.alpha, 0.0, 1e-12);
}

TEST(PowerLawFitTest, RecoversSynthesisedExponent) {
  const SpectrumModel model{32, 1.19, 1.0};
  const auto ev = oracle::eigenvalues(synth_covariance(model, 7));
  const auto fit = fit_power_law(ev, TailRange{0, 32});
  EXPECT_NEAR(fit.alpha, 1.19, 1e-6);
}

TEST(PowerLawFitTest, RejectsBadRanges) {
  const std::vector<double> lam{1.0, 0.5, 0.0};
  EXPECT_THROW(fit_power_law(lam, TailRange{0, 1}), ValidationError);
  EXPECT_THROW(fit_power_law(lam, TailRange{0, 3}), ValidationError);
  EXPECT_THROW(fit_power_law(lam, TailRange{1, 5}), ValidationError);
}

TEST(PowerLawFitTest, DefaultRangeWidensForSmallDims) {
  const auto tr = default_tail_range(3);
  EXPECT_EQ(tr.begin, 0u);
  EXPECT_EQ(tr.end, 2u);
  const auto big = default_tail_range(256);
  EXPECT_EQ(big.begin, 32u);
  EXPECT_EQ(big.end, 128u);
}

TEST(CovarianceIoTest, RoundTrip) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "glowq_cov_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  CovarianceAccumulator acc(3);
  acc.accumulate(gaussian_matrix(9, 3, 1));
  const auto est = finalize(acc, 0.02, 1e-4);
  save_covariance(dir / "cov", est);
  const auto back = load_covariance(dir / "cov");
  EXPECT_EQ(back.sigma, est.sigma);
  EXPECT_EQ(back.shrink_alpha, 0.02);
  EXPECT_EQ(back.ridge_eps, 1e-4);
  EXPECT_EQ(back.sample_count, 9u);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace glowq
