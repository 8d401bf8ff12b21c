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

#include <benchmark/benchmark.h>

#include "glowq/linalg.hpp"
#include "glowq/rng.hpp"

namespace glowq {
namespace {

void BM_ThinQr(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix m = gaussian_matrix(2 * n, n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(thin_qr(m));
}
BENCHMARK(BM_ThinQr)->Arg(32)->Arg(64)->Arg(128);

void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix m = gaussian_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(svd(m));
}
BENCHMARK(BM_Svd)->Arg(32)->Arg(64)->Arg(128);

void BM_PsdRoots(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix g = gaussian_matrix(n, n, 3);
  const Matrix s = matmul_nt(g, g);
  for (auto _ : state) benchmark::DoNotOptimize(psd_roots(s));
}
BENCHMARK(BM_PsdRoots)->Arg(32)->Arg(64)->Arg(128);

}  // namespace
}  // namespace glowq
