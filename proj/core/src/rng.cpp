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

#include "glowq/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "glowq/errors.hpp"
#include "glowq/linalg.hpp"

namespace glowq {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t CounterRng::word(std::uint64_t counter) const noexcept {
  return splitmix64_mix(seed_ + (counter + 1) * kGolden);
}

double CounterRng::uniform(std::uint64_t counter) const noexcept {
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  return (static_cast<double>(word(counter) >> 11) + 0.5) * kScale;
}

double CounterRng::normal(std::uint64_t index) const noexcept {
  const std::uint64_t pair = index / 2;
  const double u1 = uniform(2 * pair);
  const double u2 = uniform(2 * pair + 1);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return (index % 2 == 0) ? radius * std::cos(theta) : radius * std::sin(theta);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return splitmix64_mix(splitmix64_mix(seed ^ 0xA0761D6478BD642FULL) + tag * kGolden);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept {
  // FNV-1a over the tag bytes.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return derive_seed(seed, h);
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                       std::uint64_t first_index) {
  if (rows == 0 || cols == 0) throw ShapeError("gaussian_matrix: rows and cols must be > 0");
  if (rows > std::numeric_limits<std::size_t>::max() / cols) {
    throw ValidationError("gaussian_matrix: size overflow");
  }
  const CounterRng rng(seed);
  Matrix m(rows, cols);
  auto data = m.data();
  const std::size_t n = data.size();
  std::size_t k = 0;
  if (first_index % 2 == 1) {
    data[0] = rng.normal(first_index);
    k = 1;
  }
  // Fill pairwise so each Box-Muller draw is evaluated once.
  for (; k + 1 < n; k += 2) {
    const std::uint64_t idx = first_index + k;
    const double u1 = rng.uniform(idx);
    const double u2 = rng.uniform(idx + 1);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    data[k] = radius * std::cos(theta);
    data[k + 1] = radius * std::sin(theta);
  }
  if (k < n) data[k] = rng.normal(first_index + k);
  return m;
}

Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
  return thin_qr(gaussian_matrix(n, n, seed)).q;
}

}  // namespace glowq
