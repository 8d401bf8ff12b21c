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

#include "glowq/quant.hpp"
#include "glowq/rng.hpp"
#include "glowq/runtime.hpp"

namespace glowq {
namespace {

constexpr std::size_t kDim = 128;
constexpr std::size_t kRank = 16;

struct Setup {
  LayerGroup group;
  WeightMap weights;
  SharedFactors shared;
  std::vector<LayerFactors> layerwise;
  Matrix x;
};

Setup make(std::size_t tokens) {
  const std::vector<ModuleSpec> specs{{"q", ModuleKind::q, 0, kDim, kDim},
                                      {"k", ModuleKind::k, 0, kDim, kDim},
                                      {"v", ModuleKind::v, 0, kDim, kDim}};
  QuantConfig qc;
  qc.group_size = 32;
  Setup s{plan_groups(specs).front(), {}, {{}, gaussian_matrix(kRank, kDim, 9), kRank, true, 0.0, 0.0}, {},
          gaussian_matrix(tokens, kDim, 10)};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    s.weights.emplace(specs[i].id, quantize(gaussian_matrix(kDim, kDim, 20 + i), qc));
    const Matrix a = gaussian_matrix(kDim, kRank, 30 + i);
    s.shared.a_blocks.push_back({specs[i].id, a});
    s.layerwise.push_back({specs[i].id, a, gaussian_matrix(kRank, kDim, 40 + i), 0.0, 0.0});
  }
  return s;
}

void BM_CachedForward(benchmark::State& state) {
  const Setup s = make(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    CostLedger ledger;
    benchmark::DoNotOptimize(cached_forward(s.x, s.group, s.weights, s.shared, true, ledger));
  }
}
BENCHMARK(BM_CachedForward)->Arg(16)->Arg(128);

void BM_LayerwiseForward(benchmark::State& state) {
  const Setup s = make(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    CostLedger ledger;
    benchmark::DoNotOptimize(layerwise_forward(s.x, s.group, s.weights, s.layerwise, true, ledger));
  }
}
BENCHMARK(BM_LayerwiseForward)->Arg(16)->Arg(128);

}  // namespace
}  // namespace glowq
