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

#include <algorithm>
#include <array>
#include <set>

#include "glowq/errors.hpp"

namespace glowq {

namespace {

constexpr std::array<std::string_view, 7> kKindNames = {"q", "k", "v", "o", "gate", "up", "down"};

std::uint64_t u64(std::size_t v) { return static_cast<std::uint64_t>(v); }

const QuantizedLinear& weight_for(const WeightMap& weights, const std::string& id) {
  const auto it = weights.find(id);
  if (it == weights.end()) throw ValidationError("no quantized weight for module '" + id + "'");
  return it->second;
}

void require_input(const Matrix& x, const QuantizedLinear& q, const std::string& id) {
  if (x.cols() != q.in_dim()) {
    throw ShapeError("module '" + id + "' expects input dim " + std::to_string(q.in_dim()) +
                     ", got " + std::to_string(x.cols()));
  }
}

void require_factor_shapes(const Matrix& a, const Matrix& b, const QuantizedLinear& q,
                           const std::string& id) {
  if (a.rows() != q.out_dim() || b.cols() != q.in_dim() || a.cols() != b.rows()) {
    throw ShapeError("factors for module '" + id + "' do not match its weight shape");
  }
}

}  // namespace

std::string_view to_string(ModuleKind kind) noexcept {
  return kKindNames[static_cast<std::size_t>(kind)];
}

ModuleKind parse_module_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<ModuleKind>(i);
  }
  throw ValidationError("unknown module kind '" + std::string(name) + "'");
}

std::vector<std::string> LayerGroup::members() const {
  std::vector<std::string> out;
  out.reserve(size());
  out.push_back(anchor);
  out.insert(out.end(), consumers.begin(), consumers.end());
  return out;
}

std::vector<LayerGroup> plan_groups(std::span<const ModuleSpec> modules,
                                    std::vector<std::string>* warnings) {
  std::set<std::string, std::less<>> ids;
  std::map<std::size_t, std::array<const ModuleSpec*, 7>> by_layer;
  for (const auto& m : modules) {
    if (m.in_dim == 0 || m.out_dim == 0) {
      throw ValidationError("module '" + m.id + "' has a zero dimension");
    }
    if (!ids.insert(m.id).second) throw ValidationError("duplicate module id '" + m.id + "'");
    auto& slots = by_layer[m.layer];
    auto& slot = slots[static_cast<std::size_t>(m.kind)];
    if (slot != nullptr) {
      throw ValidationError("layer " + std::to_string(m.layer) + " has two '" +
                            std::string(to_string(m.kind)) + "' modules");
    }
    slot = &m;
  }

  std::vector<LayerGroup> groups;
  auto solo = [&](const ModuleSpec* m) {
    if (m != nullptr) groups.push_back(LayerGroup{m->id, m->id, {}, true});
  };
  auto family = [&](std::size_t layer, std::string_view name,
                    std::initializer_list<const ModuleSpec*> kinds) {
    std::vector<const ModuleSpec*> present;
    for (const auto* m : kinds) {
      if (m != nullptr) present.push_back(m);
    }
    if (present.empty()) return;
    const bool same_dim = std::all_of(present.begin(), present.end(), [&](const ModuleSpec* m) {
      return m->in_dim == present.front()->in_dim;
    });
    if (present.size() == 1 || !same_dim) {
      if (!same_dim && warnings != nullptr) {
        warnings->push_back("layer " + std::to_string(layer) + " " + std::string(name) +
                            ": input dims differ, modules run as solo groups");
      }
      for (const auto* m : present) solo(m);
      return;
    }
    LayerGroup g{"L" + std::to_string(layer) + "." + std::string(name), present.front()->id, {},
                 false};
    for (std::size_t i = 1; i < present.size(); ++i) g.consumers.push_back(present[i]->id);
    groups.push_back(std::move(g));
  };

  for (const auto& [layer, s] : by_layer) {
    auto at = [&](ModuleKind k) { return s[static_cast<std::size_t>(k)]; };
    family(layer, "attn", {at(ModuleKind::q), at(ModuleKind::k), at(ModuleKind::v)});
    solo(at(ModuleKind::o));
    family(layer, "mlp", {at(ModuleKind::gate), at(ModuleKind::up)});
    solo(at(ModuleKind::down));
  }

  std::set<std::string, std::less<>> group_ids;
  for (const auto& g : groups) {
    if (!group_ids.insert(g.group_id).second) {
      throw ValidationError("group id '" + g.group_id + "' collides with another group");
    }
  }
  return groups;
}

CostLedger& CostLedger::operator+=(const CostLedger& o) noexcept {
  flops_quantized += o.flops_quantized;
  flops_right_proj += o.flops_right_proj;
  flops_left_apply += o.flops_left_apply;
  params_lowrank += o.params_lowrank;
  bytes_cache += o.bytes_cache;
  return *this;
}

CostLedger operator+(CostLedger a, const CostLedger& b) noexcept { return a += b; }

const Matrix& CorrectionCache::materialize(std::string_view producer, const Matrix& x,
                                           const Matrix& b_shared) {
  if (r_cached_) {
    throw ValidationError("group '" + group_id_ + "': projection already materialised by '" +
                          produced_by_ + "'");
  }
  if (x.cols() != b_shared.cols()) throw ShapeError("materialize: input dim mismatch");
  r_cached_ = matmul_nt(x, b_shared);
  produced_by_ = std::string(producer);
  ++produced_count_;
  return *r_cached_;
}

const Matrix& CorrectionCache::consume() {
  if (!r_cached_) throw ValidationError("group '" + group_id_ + "': cache read before materialise");
  ++consumed_count_;
  return *r_cached_;
}

void CorrectionCache::reset() noexcept {
  r_cached_.reset();
  produced_by_.clear();
  produced_count_ = 0;
  consumed_count_ = 0;
}

std::uint64_t CorrectionCache::bytes() const noexcept {
  return r_cached_ ? u64(r_cached_->rows()) * u64(r_cached_->cols()) * sizeof(double) : 0;
}

Matrix quantized_forward(const Matrix& x, const QuantizedLinear& q) {
  if (x.cols() != q.in_dim()) throw ShapeError("quantized_forward: input dim mismatch");
  return matmul_nt(x, dequantize(q));
}

std::vector<ModuleOutput> cached_forward(const Matrix& x, const LayerGroup& group,
                                         const WeightMap& weights, const SharedFactors& factors,
                                         bool restore_active, CostLedger& ledger,
                                         CorrectionCache* cache) {
  const auto members = group.members();
  const std::uint64_t tokens = u64(x.rows());
  const std::uint64_t d = u64(x.cols());
  const std::uint64_t r = u64(factors.b_shared.rows());

  std::vector<const QuantizedLinear*> qs;
  for (const auto& id : members) {
    const auto& q = weight_for(weights, id);
    require_input(x, q, id);
    if (restore_active) require_factor_shapes(factors.a_for(id), factors.b_shared, q, id);
    qs.push_back(&q);
  }

  CostLedger delta;
  std::optional<CorrectionCache> local;
  if (cache == nullptr) cache = &local.emplace(group.group_id);
  if (restore_active) {
    cache->materialize(group.anchor, x, factors.b_shared);
    delta.flops_right_proj += 2 * tokens * d * r;
    delta.params_lowrank += r * d;
    if (!group.solo) delta.bytes_cache += cache->bytes();
  }

  std::vector<ModuleOutput> out;
  out.reserve(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    const std::uint64_t o = u64(qs[i]->out_dim());
    Matrix y = quantized_forward(x, *qs[i]);
    delta.flops_quantized += 2 * tokens * d * o;
    if (restore_active) {
      const Matrix& a = factors.a_for(members[i]);
      y += matmul_nt(cache->consume(), a);
      delta.flops_left_apply += 2 * tokens * r * o;
      delta.params_lowrank += o * r;
    }
    out.push_back({members[i], std::move(y)});
  }
  ledger += delta;
  return out;
}

std::vector<ModuleOutput> layerwise_forward(const Matrix& x, const LayerGroup& group,
                                            const WeightMap& weights,
                                            std::span<const LayerFactors> factors,
                                            bool restore_active, CostLedger& ledger) {
  auto factor_for = [&](const std::string& id) -> const LayerFactors& {
    for (const auto& f : factors) {
      if (f.module_id == id) return f;
    }
    throw ValidationError("no layerwise factors for module '" + id + "'");
  };
  const std::uint64_t tokens = u64(x.rows());
  const std::uint64_t d = u64(x.cols());
  CostLedger delta;
  std::vector<ModuleOutput> out;
  for (const auto& id : group.members()) {
    const auto& q = weight_for(weights, id);
    require_input(x, q, id);
    const std::uint64_t o = u64(q.out_dim());
    Matrix y = quantized_forward(x, q);
    delta.flops_quantized += 2 * tokens * d * o;
    if (restore_active) {
      const LayerFactors& f = factor_for(id);
      require_factor_shapes(f.a, f.b, q, id);
      const std::uint64_t r = u64(f.b.rows());
      y += matmul_nt(matmul_nt(x, f.b), f.a);
      delta.flops_right_proj += 2 * tokens * d * r;
      delta.flops_left_apply += 2 * tokens * r * o;
      delta.params_lowrank += o * r + r * d;
    }
    out.push_back({id, std::move(y)});
  }
  ledger += delta;
  return out;
}

std::uint64_t param_count(std::span<const std::size_t> out_dims, std::size_t in_dim,
                          std::size_t rank, FactorMode mode) {
  std::uint64_t left = 0;
  for (std::size_t o : out_dims) left += u64(o) * u64(rank);
  const std::uint64_t right = u64(rank) * u64(in_dim);
  const std::uint64_t copies = mode == FactorMode::shared ? 1 : u64(out_dims.size());
  return left + copies * right;
}

std::uint64_t param_count(const SharedFactors& factors) {
  std::vector<std::size_t> dims;
  for (const auto& blk : factors.a_blocks) dims.push_back(blk.a.rows());
  return param_count(dims, factors.b_shared.cols(), factors.b_shared.rows(), FactorMode::shared);
}

std::uint64_t param_count(std::span<const LayerFactors> factors) {
  std::uint64_t total = 0;
  for (const auto& f : factors) total += u64(f.a.size()) + u64(f.b.size());
  return total;
}

std::string ledger_csv(std::span<const LedgerRow> rows) {
  std::string out =
      "group_id,mode,flops_quantized,flops_right_proj,flops_left_apply,params_lowrank,bytes_cache\n";
  for (const auto& row : rows) {
    const auto& l = row.ledger;
    out += row.group_id + "," + row.mode + "," + std::to_string(l.flops_quantized) + "," +
           std::to_string(l.flops_right_proj) + "," + std::to_string(l.flops_left_apply) + "," +
           std::to_string(l.params_lowrank) + "," + std::to_string(l.bytes_cache) + "\n";
  }
  return out;
}

}  // namespace glowq
