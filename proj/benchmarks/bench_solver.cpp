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

#include "glowq/calib.hpp"
#include "glowq/rng.hpp"
#include "glowq/solver.hpp"

namespace glowq {
namespace {

struct Instance {
  StackedError se;
  Matrix cov;
};

// Three blocks of d rows each, as in a q/k/v group.
Instance make(std::size_t d) {
  return {StackedError::stack({{"q", gaussian_matrix(d, d, 1)}, {"k", gaussian_matrix(d, d, 2)},
                               {"v", gaussian_matrix(d, d, 3)}}),
          synth_covariance({d, 1.19, 1.0}, 4)};
}

void BM_RsvdSolve(benchmark::State& state) {
  const Instance in = make(static_cast<std::size_t>(state.range(0)));
  SolveConfig cfg;
  cfg.rank = 16;
  cfg.oversampling = 16;
  cfg.power_iters = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(qr_reduced_rsvd(in.se, in.cov, cfg));
}
BENCHMARK(BM_RsvdSolve)->Args({64, 0})->Args({64, 2})->Args({128, 0})->Args({128, 2});

void BM_ExactSolve(benchmark::State& state) {
  const Instance in = make(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(qr_reduced_exact(in.se, in.cov, 16));
}
BENCHMARK(BM_ExactSolve)->Arg(64)->Arg(128);

}  // namespace
}  // namespace glowq
