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

#include "glowq/runtime.hpp"

#include <gtest/gtest.h>

#include <vector>

#include "glowq/errors.hpp"
#include "glowq/rng.hpp"
#include "oracles.hpp"

namespace glowq {
namespace {

std::vector<ModuleSpec> decoder_block(std::size_t layer, std::size_t d, std::size_t o_kv,
                                      std::size_t ffn) {
  const std::string p = "L" + std::to_string(layer) + ".";
  return {
      {p + "q", ModuleKind::q, layer, d, d},          {p + "k", ModuleKind::k, layer, d, o_kv},
      {p + "v", ModuleKind::v, layer, d, o_kv},       {p + "o", ModuleKind::o, layer, d, d},
      {p + "gate", ModuleKind::gate, layer, d, ffn},  {p + "up", ModuleKind::up, layer, d, ffn},
      {p + "down", ModuleKind::down, layer, ffn, d},
  };
}

struct GroupFixture {
  LayerGroup group;
  WeightMap weights;
  std::map<std::string, Matrix> full;
  StackedError se;
};

GroupFixture make_group(std::vector<std::size_t> outs, std::size_t d, std::uint64_t seed,
                        std::size_t exact_rank = 0) {
  QuantConfig qc;
  qc.group_size = 8;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < outs.size(); ++i) ids.push_back("m" + std::to_string(i));
  LayerGroup g{"g", ids.front(), {ids.begin() + 1, ids.end()}, outs.size() == 1};
  WeightMap weights;
  std::map<std::string, Matrix> full;
  std::vector<ErrorBlock> blocks;
  const Matrix shared_b = gaussian_matrix(std::max<std::size_t>(exact_rank, 1), d, seed + 99);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    Matrix w = gaussian_matrix(outs[i], d, derive_seed(seed, i));
    QuantizedLinear q = quantize(w, qc);
    if (exact_rank > 0) {
      // Replace the true weight so that W - W_q is exactly rank exact_rank.
      w = dequantize(q) + 1e-2 * gaussian_matrix(outs[i], exact_rank, seed + i) * shared_b;
    }
    blocks.push_back({ids[i], error_matrix(w, q)});
    weights.emplace(ids[i], std::move(q));
    full.emplace(ids[i], std::move(w));
  }
  return {std::move(g), std::move(weights), std::move(full), StackedError::stack(std::move(blocks))};
}

std::vector<LayerFactors> duplicate(const SharedFactors& f) {
  std::vector<LayerFactors> out;
  for (const auto& blk : f.a_blocks) out.push_back({blk.module_id, blk.a, f.b_shared, 0.0, 0.0});
  return out;
}

TEST(PlanGroupsTest, StandardDecoderBlock) {
  const auto mods = decoder_block(0, 16, 8, 32);
  const auto groups = plan_groups(mods);
  ASSERT_EQ(groups.size(), 4u);
  EXPECT_EQ(groups[0].group_id, "L0.attn");
  EXPECT_EQ(groups[0].anchor, "L0.q");
  EXPECT_EQ(groups[0].consumers, (std::vector<std::string>{"L0.k", "L0.v"}));
  EXPECT_FALSE(groups[0].solo);
  EXPECT_EQ(groups[1].anchor, "L0.o");
  EXPECT_TRUE(groups[1].solo);
  EXPECT_EQ(groups[2].anchor, "L0.gate");
  EXPECT_EQ(groups[2].consumers, (std::vector<std::string>{"L0.up"}));
  EXPECT_TRUE(groups[3].solo);
  EXPECT_EQ(groups[3].anchor, "L0.down");
}

TEST(PlanGroupsTest, AttentionOnly) {
  auto mods = decoder_block(2, 8, 8, 8);
  mods.resize(4);
  const auto groups = plan_groups(mods);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].size(), 3u);
  EXPECT_TRUE(groups[1].solo);
}

TEST(PlanGroupsTest, MismatchedInputsSplitWithWarning) {
  std::vector<ModuleSpec> mods{{"q", ModuleKind::q, 0, 8, 8}, {"k", ModuleKind::k, 0, 6, 8}};
  std::vector<std::string> warnings;
  const auto groups = plan_groups(mods, &warnings);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_TRUE(groups[0].solo);
  EXPECT_TRUE(groups[1].solo);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(PlanGroupsTest, MissingAnchorPromotesNextKind) {
  std::vector<ModuleSpec> mods{{"k", ModuleKind::k, 0, 8, 4}, {"v", ModuleKind::v, 0, 8, 4}};
  const auto groups = plan_groups(mods);
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].anchor, "k");
}

TEST(PlanGroupsTest, MultipleLayersInOrder) {
  auto mods = decoder_block(1, 8, 8, 8);
  const auto first = decoder_block(0, 8, 8, 8);
  mods.insert(mods.end(), first.begin(), first.end());
  const auto groups = plan_groups(mods);
  ASSERT_EQ(groups.size(), 8u);
  EXPECT_EQ(groups[0].group_id, "L0.attn");
  EXPECT_EQ(groups[4].group_id, "L1.attn");
}

TEST(PlanGroupsTest, RejectsDuplicates) {
  std::vector<ModuleSpec> dup_id{{"a", ModuleKind::q, 0, 8, 8}, {"a", ModuleKind::k, 0, 8, 8}};
  EXPECT_THROW(plan_groups(dup_id), ValidationError);
  std::vector<ModuleSpec> dup_kind{{"a", ModuleKind::q, 0, 8, 8}, {"b", ModuleKind::q, 0, 8, 8}};
  EXPECT_THROW(plan_groups(dup_kind), ValidationError);
  std::vector<ModuleSpec> zero{{"a", ModuleKind::q, 0, 0, 8}};
  EXPECT_THROW(plan_groups(zero), ValidationError);
}

TEST(ModuleKindTest, NamesRoundTrip) {
  for (auto k : {ModuleKind::q, ModuleKind::k, ModuleKind::v, ModuleKind::o, ModuleKind::gate,
                 ModuleKind::up, ModuleKind::down}) {
    EXPECT_EQ(parse_module_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_module_kind("proj"), ValidationError);
}

TEST(CachedForwardTest, ZeroLeftFactorsGiveQuantizedPath) {
  auto fx = make_group({8, 4, 4}, 16, 1);
  auto f = solve_unweighted(fx.se, 3);
  for (auto& blk : f.a_blocks) blk.a = Matrix(blk.a.rows(), blk.a.cols());
  const Matrix x = gaussian_matrix(5, 16, 2);
  CostLedger ledger;
  const auto out = cached_forward(x, fx.group, fx.weights, f, true, ledger);
  for (const auto& o : out) {
    EXPECT_LT(max_abs_diff(o.y, quantized_forward(x, fx.weights.at(o.module_id))), 1e-14);
  }
}

TEST(CachedForwardTest, ExactFactorsRecoverFullPrecision) {
  auto fx = make_group({8, 4, 4}, 16, 3, 2);
  const auto f = solve_unweighted(fx.se, 2);
  const Matrix x = gaussian_matrix(6, 16, 4);
  CostLedger ledger;
  for (const auto& o : cached_forward(x, fx.group, fx.weights, f, true, ledger)) {
    const Matrix ref = matmul_nt(x, fx.full.at(o.module_id));
    EXPECT_LT(max_abs_diff(o.y, ref), 1e-8 * std::max(1.0, ref.max_abs()));
  }
}

TEST(CachedForwardTest, MatchesLayerwiseWithDuplicatedFactors) {
  auto fx = make_group({8, 4, 4}, 16, 5);
  const auto f = solve_unweighted(fx.se, 4);
  const Matrix x = gaussian_matrix(7, 16, 6);
  CostLedger cached;
  CostLedger layerwise;
  const auto a = cached_forward(x, fx.group, fx.weights, f, true, cached);
  const auto lf = duplicate(f);
  const auto b = layerwise_forward(x, fx.group, fx.weights, lf, true, layerwise);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].module_id, b[i].module_id);
    EXPECT_LE(max_abs_diff(a[i].y, b[i].y), 1e-12);
  }
  EXPECT_EQ(layerwise.flops_right_proj, 3 * cached.flops_right_proj);
  EXPECT_EQ(layerwise.flops_left_apply, cached.flops_left_apply);
  EXPECT_EQ(layerwise.flops_quantized, cached.flops_quantized);
}

TEST(CachedForwardTest, LedgerClosedForms) {
  auto fx = make_group({8, 4, 4}, 16, 7);
  const auto f = solve_unweighted(fx.se, 2);
  const std::uint64_t t = 5;
  const std::uint64_t d = 16;
  const std::uint64_t r = 2;
  const Matrix x = gaussian_matrix(t, d, 8);
  CostLedger ledger;
  CorrectionCache cache("g");
  cached_forward(x, fx.group, fx.weights, f, true, ledger, &cache);
  EXPECT_EQ(ledger.flops_quantized, 2 * t * d * 16);
  EXPECT_EQ(ledger.flops_right_proj, 2 * t * d * r);
  EXPECT_EQ(ledger.flops_left_apply, 2 * t * r * 16);
  EXPECT_EQ(ledger.params_lowrank, 16 * r + r * d);
  EXPECT_EQ(ledger.bytes_cache, t * r * 8);
  EXPECT_EQ(cache.produced_count(), 1u);
  EXPECT_EQ(cache.consumed_count(), 3u);
  EXPECT_EQ(cache.produced_by(), "m0");
}

TEST(CachedForwardTest, InactiveGroupSkipsCache) {
  auto fx = make_group({8, 4}, 16, 9);
  const auto f = solve_unweighted(fx.se, 2);
  const Matrix x = gaussian_matrix(3, 16, 1);
  CostLedger ledger;
  CorrectionCache cache("g");
  const auto out = cached_forward(x, fx.group, fx.weights, f, false, ledger, &cache);
  EXPECT_FALSE(cache.materialized());
  EXPECT_EQ(ledger.flops_right_proj, 0u);
  EXPECT_EQ(ledger.bytes_cache, 0u);
  EXPECT_EQ(ledger.params_lowrank, 0u);
  EXPECT_LT(max_abs_diff(out[0].y, quantized_forward(x, fx.weights.at("m0"))), 1e-15);
}

TEST(CachedForwardTest, SoloGroupHasNoCacheBytesAndSameCost) {
  auto fx = make_group({8}, 16, 10);
  const auto f = solve_unweighted(fx.se, 2);
  const Matrix x = gaussian_matrix(3, 16, 1);
  CostLedger cached;
  CostLedger layerwise;
  cached_forward(x, fx.group, fx.weights, f, true, cached);
  const auto lf = duplicate(f);
  layerwise_forward(x, fx.group, fx.weights, lf, true, layerwise);
  EXPECT_EQ(cached.bytes_cache, 0u);
  EXPECT_EQ(cached, layerwise);
}

TEST(CorrectionCacheTest, SecondMaterializeInBatchThrows) {
  CorrectionCache cache("g");
  EXPECT_THROW(cache.consume(), ValidationError);
  const Matrix x = gaussian_matrix(2, 4, 1);
  const Matrix b = gaussian_matrix(3, 4, 2);
  cache.materialize("q", x, b);
  EXPECT_THROW(cache.materialize("k", x, b), ValidationError);
  EXPECT_EQ(cache.bytes(), 2u * 3u * 8u);
  cache.reset();
  EXPECT_EQ(cache.bytes(), 0u);
  EXPECT_NO_THROW(cache.materialize("q", x, b));
}

TEST(CachedForwardTest, ShapeErrors) {
  auto fx = make_group({8, 4}, 16, 11);
  const auto f = solve_unweighted(fx.se, 2);
  CostLedger ledger;
  EXPECT_THROW(cached_forward(gaussian_matrix(2, 15, 1), fx.group, fx.weights, f, true, ledger),
               ShapeError);
  LayerGroup missing{"x", "nope", {}, true};
  EXPECT_THROW(cached_forward(gaussian_matrix(2, 16, 1), missing, fx.weights, f, true, ledger),
               ValidationError);
}

TEST(ParamCountTest, EqualOutputQkvRatio) {
  const std::vector<std::size_t> outs{64, 64, 64};
  const auto shared = param_count(outs, 64, 8, FactorMode::shared);
  const auto lw = param_count(outs, 64, 8, FactorMode::layerwise);
  EXPECT_EQ(3 * shared, 2 * lw);
}

TEST(ParamCountTest, SoloIdentical) {
  const std::vector<std::size_t> outs{48};
  EXPECT_EQ(param_count(outs, 32, 4, FactorMode::shared), param_count(outs, 32, 4, FactorMode::layerwise));
}

TEST(ParamCountTest, GqaClosedForm) {
  const std::size_t d = 3072;
  const std::size_t r = 64;
  const std::vector<std::size_t> outs{3072, 1024, 1024};
  const auto shared = param_count(outs, d, r, FactorMode::shared);
  const auto lw = param_count(outs, d, r, FactorMode::layerwise);
  EXPECT_EQ(shared, (3072u + 1024u + 1024u) * r + r * d);
  EXPECT_EQ(lw - shared, 2 * r * d);
}

TEST(ParamCountTest, FactorOverloadsAgree) {
  auto fx = make_group({8, 4, 4}, 16, 12);
  const auto f = solve_unweighted(fx.se, 3);
  const std::vector<std::size_t> outs{8, 4, 4};
  EXPECT_EQ(param_count(f), param_count(outs, 16, 3, FactorMode::shared));
  EXPECT_EQ(param_count(duplicate(f)), param_count(outs, 16, 3, FactorMode::layerwise));
}

TEST(LedgerTest, AdditiveAndCsv) {
  CostLedger a{1, 2, 3, 4, 5};
  const CostLedger b{10, 20, 30, 40, 50};
  EXPECT_EQ(a + b, (CostLedger{11, 22, 33, 44, 55}));
  a += b;
  EXPECT_EQ(a.total_flops(), 66u);
  const std::vector<LedgerRow> rows{{"L0.attn", "cached", b}};
  EXPECT_EQ(ledger_csv(rows),
            "group_id,mode,flops_quantized,flops_right_proj,flops_left_apply,params_lowrank,"
            "bytes_cache\nL0.attn,cached,10,20,30,40,50\n");
}

TEST(LedgerTest, DecoderBlockMatchesClosedForm) {
  const std::uint64_t t = 16;
  const std::uint64_t d = 128;
  const std::uint64_t r = 16;
  const auto mods = decoder_block(0, d, d, d);
  const auto groups = plan_groups(mods);
  QuantConfig qc;
  WeightMap weights;
  for (const auto& m : mods) weights.emplace(m.id, quantize(gaussian_matrix(m.out_dim, m.in_dim, 1), qc));
  const Matrix x = gaussian_matrix(t, d, 2);
  CostLedger cached;
  CostLedger layerwise;
  for (const auto& g : groups) {
    SharedFactors f{{}, gaussian_matrix(r, d, 3), r, false, 0.0, 0.0};
    for (const auto& id : g.members()) f.a_blocks.push_back({id, gaussian_matrix(d, r, 4)});
    cached_forward(x, g, weights, f, true, cached);
    layerwise_forward(x, g, weights, duplicate(f), true, layerwise);
  }
  // Seven modules of shape d x d; four groups (attn, o, mlp, down).
  EXPECT_EQ(cached.flops_quantized, 7 * 2 * t * d * d);
  EXPECT_EQ(cached.flops_right_proj, 4 * 2 * t * d * r);
  EXPECT_EQ(layerwise.flops_right_proj, 7 * 2 * t * d * r);
  EXPECT_EQ(cached.flops_left_apply, 7 * 2 * t * r * d);
  EXPECT_EQ(cached.params_lowrank, 7 * d * r + 4 * r * d);
  EXPECT_EQ(layerwise.params_lowrank, 7 * (d * r + r * d));
  EXPECT_EQ(cached.bytes_cache, 2 * t * r * 8);
  EXPECT_EQ(layerwise.bytes_cache, 0u);
}

}  // namespace
}  // namespace glowq
