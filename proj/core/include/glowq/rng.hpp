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

#ifndef GLOWQ_RNG_HPP_
#define GLOWQ_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "glowq/matrix.hpp"

namespace glowq {

/// Counter-based generator. Word n of stream `seed` is
///
///   splitmix64_mix(seed + (n + 1) * 0x9E3779B97F4A7C15)
///
/// where splitmix64_mix is the SplitMix64 output finalizer
/// (xor-shift 30 / mul 0xBF58476D1CE4E5B9 / xor-shift 27 /
/// mul 0x94D049BB133111EB / xor-shift 31). This is exactly the n-th output
/// of SplitMix64 seeded with `seed`, but any word can be addressed directly.
///
/// Uniforms take the top 53 bits: u = ((w >> 11) + 0.5) * 2^-53, so u is in
/// the open interval (0, 1). Standard normals come in Box-Muller pairs:
/// normal k uses uniforms (2*(k/2), 2*(k/2)+1); even k takes the cosine
/// branch, odd k the sine branch.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t word(std::uint64_t counter) const noexcept;
  double uniform(std::uint64_t counter) const noexcept;
  double normal(std::uint64_t index) const noexcept;

 private:
  std::uint64_t seed_;
};

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;

/// Independent child seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept;

/// rows x cols matrix of i.i.d. N(0, 1); entry (i, j) is
/// normal(first_index + i * cols + j), so consecutive blocks of one stream can
/// be drawn separately.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                       std::uint64_t first_index = 0);

/// Haar-ish random orthogonal n x n matrix: Q factor of a Gaussian matrix.
Matrix random_orthogonal(std::size_t n, std::uint64_t seed);

}  // namespace glowq

#endif  // GLOWQ_RNG_HPP_
