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

#include "glowq/quant.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "glowq/errors.hpp"
#include "glowq/glxm.hpp"
#include "glowq/rng.hpp"
#include "oracles.hpp"

namespace glowq {
namespace {

QuantConfig cfg(int bits, std::size_t group) {
  QuantConfig c;
  c.bits = bits;
  c.group_size = group;
  return c;
}

void expect_half_step_bound(const Matrix& w, const QuantizedLinear& q) {
  const Matrix e = error_matrix(w, q);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      EXPECT_LE(std::abs(e(i, j)), q.scale(i, j) / 2 + 1e-12) << i << "," << j;
    }
  }
}

TEST(QuantConfigTest, Validation) {
  EXPECT_NO_THROW(cfg(2, 4).validate());
  EXPECT_NO_THROW(cfg(8, 4).validate());
  EXPECT_THROW(cfg(5, 4).validate(), ValidationError);
  EXPECT_THROW(cfg(4, 0).validate(), ValidationError);
  QuantConfig asym;
  asym.symmetric = false;
  EXPECT_THROW(asym.validate(), ValidationError);
  EXPECT_EQ(cfg(4, 1).qmax(), 7);
  EXPECT_EQ(cfg(4, 1).qmin(), -8);
  EXPECT_EQ(cfg(4, 128).num_groups(300), 3u);
}

TEST(QuantizeTest, ZeroRowGivesZeroScaleAndCodes) {
  const auto q = quantize(Matrix(1, 4), cfg(4, 4));
  EXPECT_EQ(q.scales()(0, 0), 0.0);
  for (auto c : q.codes()) EXPECT_EQ(c, 0);
  EXPECT_EQ(dequantize(q), Matrix(1, 4));
}

TEST(QuantizeTest, IntegerRowAtQmaxIsExact) {
  Matrix w(1, 15);
  for (std::size_t j = 0; j < 15; ++j) w(0, j) = static_cast<double>(j) - 7.0;
  const auto q = quantize(w, cfg(4, 15));
  EXPECT_EQ(q.scales()(0, 0), 1.0);
  for (std::size_t j = 0; j < 15; ++j) EXPECT_EQ(q.code(0, j), static_cast<int>(j) - 7);
  EXPECT_EQ(error_matrix(w, q), Matrix(1, 15));
}

TEST(QuantizeTest, RoundsHalfToEven) {
  // scale = 7/7 = 1: 0.5 -> 0, 1.5 -> 2, 2.5 -> 2, -0.5 -> 0, -1.5 -> -2.
  const Matrix w = Matrix::from_rows({{7, 0.5, 1.5, 2.5, -0.5, -1.5}});
  const auto q = quantize(w, cfg(4, 6));
  EXPECT_EQ(q.code(0, 1), 0);
  EXPECT_EQ(q.code(0, 2), 2);
  EXPECT_EQ(q.code(0, 3), 2);
  EXPECT_EQ(q.code(0, 4), 0);
  EXPECT_EQ(q.code(0, 5), -2);
}

TEST(QuantizeTest, RandomHalfStepBound) {
  const Matrix w = gaussian_matrix(8, 16, 4);
  const auto q = quantize(w, cfg(4, 8));
  EXPECT_EQ(q.scales().cols(), 2u);
  expect_half_step_bound(w, q);
}

TEST(QuantizeTest, ShortFinalGroup) {
  const Matrix w = gaussian_matrix(3, 10, 6);
  const auto q = quantize(w, cfg(3, 4));
  EXPECT_EQ(q.scales().cols(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const double amax = std::max(std::abs(w(i, 8)), std::abs(w(i, 9)));
    EXPECT_DOUBLE_EQ(q.scales()(i, 2), amax / 3.0);
  }
  expect_half_step_bound(w, q);
}

TEST(QuantizeTest, CodesStayInRange) {
  for (int bits : {2, 3, 4, 8}) {
    const auto q = quantize(gaussian_matrix(6, 12, 9), cfg(bits, 5));
    const auto c = q.config();
    for (auto code : q.codes()) {
      EXPECT_GE(code, c.qmin());
      EXPECT_LE(code, c.qmax());
    }
  }
}

TEST(QuantizeTest, AdditiveErrorConstruction) {
  const Matrix w = gaussian_matrix(4, 8, 3);
  const auto q = quantize(w, cfg(4, 4));
  const Matrix wq = dequantize(q);
  EXPECT_EQ(wq + error_matrix(w, q), w);
}

TEST(QuantizeTest, LowerBitsNeverReduceError) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix w = gaussian_matrix(8, 32, seed);
    const double e2 = error_matrix(w, quantize(w, cfg(2, 16))).frobenius_norm();
    const double e4 = error_matrix(w, quantize(w, cfg(4, 16))).frobenius_norm();
    EXPECT_GE(e2, e4) << "seed " << seed;
  }
}

TEST(QuantizeTest, ScaleEquivariance) {
  const Matrix w = gaussian_matrix(5, 12, 21);
  const auto q = quantize(w, cfg(4, 4));
  for (double c : {0.5, 2.0, 3.7, 1e3}) {
    const auto qc = quantize(c * w, cfg(4, 4));
    EXPECT_EQ(qc.codes(), q.codes()) << c;
    for (std::size_t i = 0; i < q.scales().rows(); ++i) {
      for (std::size_t g = 0; g < q.scales().cols(); ++g) {
        EXPECT_NEAR(qc.scales()(i, g), c * q.scales()(i, g), 1e-12 * c * q.scales()(i, g));
      }
    }
  }
}

TEST(QuantizeTest, RequantizingDequantizedWeightsIsStable) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix w = gaussian_matrix(6, 16, seed);
    const auto q1 = quantize(w, cfg(4, 8));
    const auto q2 = quantize(dequantize(q1), cfg(4, 8));
    EXPECT_EQ(q2.codes(), q1.codes());
    EXPECT_EQ(q2.scales(), q1.scales());
  }
}

TEST(QuantizedLinearTest, RejectsInvalidParts) {
  EXPECT_THROW(QuantizedLinear(1, 2, {8, 0}, Matrix(1, 1, {1.0}), cfg(4, 2)), ValidationError);
  EXPECT_THROW(QuantizedLinear(1, 2, {1, 0}, Matrix(1, 1), cfg(4, 2)), ValidationError);
  EXPECT_THROW(QuantizedLinear(1, 2, {1}, Matrix(1, 1, {1.0}), cfg(4, 2)), ShapeError);
  EXPECT_THROW(QuantizedLinear(1, 2, {1, 1}, Matrix(1, 2, {1.0, 1.0}), cfg(4, 2)), ShapeError);
}

TEST(QuantizeTest, ErrorShapeMismatch) {
  const auto q = quantize(Matrix(2, 4), cfg(4, 4));
  EXPECT_THROW(error_matrix(Matrix(2, 3), q), ShapeError);
}

TEST(QuantizedIoTest, SaveLoadRoundTrip) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "glowq_quant_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto q = quantize(gaussian_matrix(5, 9, 2), cfg(3, 4));
  save_quantized(dir / "layer", q);
  EXPECT_TRUE(fs::exists(dir / "layer.codes.glxm"));
  EXPECT_TRUE(fs::exists(dir / "layer.scales.glxm"));
  EXPECT_TRUE(fs::exists(dir / "layer.json"));
  const auto back = load_quantized(dir / "layer");
  EXPECT_EQ(back.codes(), q.codes());
  EXPECT_EQ(back.scales(), q.scales());
  EXPECT_EQ(back.config().bits, 3);
  EXPECT_EQ(back.config().group_size, 4u);

  Matrix bad = glxm::load(dir / "layer.codes.glxm");
  bad(0, 0) = 0.5;
  glxm::save(dir / "layer.codes.glxm", bad);
  EXPECT_THROW(load_quantized(dir / "layer"), IoError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace glowq
