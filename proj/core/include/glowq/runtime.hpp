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

#ifndef GLOWQ_RUNTIME_HPP_
#define GLOWQ_RUNTIME_HPP_

// Corrected forward evaluation of linear modules, y_i = x W_q,i^T + (x B^T) A_i^T,
// with the right projection R = x B^T cached once per input-sharing group,
// plus exact FLOP / parameter / byte accounting.
//
// FLOPs count one multiply-add as two. Only linear projections are counted.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "glowq/matrix.hpp"
#include "glowq/quant.hpp"
#include "glowq/solver.hpp"

namespace glowq {

enum class ModuleKind { q, k, v, o, gate, up, down };

std::string_view to_string(ModuleKind kind) noexcept;
/// Throws ValidationError for an unknown name.
ModuleKind parse_module_kind(std::string_view name);

struct ModuleSpec {
  std::string id;
  ModuleKind kind = ModuleKind::q;
  std::size_t layer = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};

struct LayerGroup {
  std::string group_id;
  std::string anchor;
  std::vector<std::string> consumers;  // empty for solo groups
  bool solo = true;

  /// Anchor followed by consumers.
  std::vector<std::string> members() const;
  std::size_t size() const noexcept { return 1 + consumers.size(); }
};

/// Groups modules per layer: q/k/v share one group anchored at q, gate/up
/// share one anchored at gate, o and down run solo. When a kind is missing
/// the next present kind in the same family becomes the anchor. Families
/// whose members disagree on in_dim are split into solo groups and a warning
/// is appended. Group ids are "L<layer>.attn", "L<layer>.mlp" or the module id
/// for solo groups. Throws ValidationError on duplicate ids, two modules of
/// the same kind in one layer, or zero dimensions.
std::vector<LayerGroup> plan_groups(std::span<const ModuleSpec> modules,
                                    std::vector<std::string>* warnings = nullptr);

struct CostLedger {
  std::uint64_t flops_quantized = 0;
  std::uint64_t flops_right_proj = 0;
  std::uint64_t flops_left_apply = 0;
  std::uint64_t params_lowrank = 0;
  std::uint64_t bytes_cache = 0;

  std::uint64_t total_flops() const noexcept {
    return flops_quantized + flops_right_proj + flops_left_apply;
  }
  CostLedger& operator+=(const CostLedger& o) noexcept;
  bool operator==(const CostLedger&) const = default;
};
CostLedger operator+(CostLedger a, const CostLedger& b) noexcept;

/// Holds R = x B_shared^T for one group and one input batch.
class CorrectionCache {
 public:
  explicit CorrectionCache(std::string group_id) : group_id_(std::move(group_id)) {}

  /// Computes and stores R. Throws ValidationError if this batch already has
  /// a materialised projection.
  const Matrix& materialize(std::string_view producer, const Matrix& x, const Matrix& b_shared);
  /// Returns R and counts one read. Throws ValidationError before materialize.
  const Matrix& consume();
  /// Drops R and zeroes the counters for the next batch.
  void reset() noexcept;

  const std::string& group_id() const noexcept { return group_id_; }
  const std::string& produced_by() const noexcept { return produced_by_; }
  bool materialized() const noexcept { return r_cached_.has_value(); }
  std::size_t produced_count() const noexcept { return produced_count_; }
  std::size_t consumed_count() const noexcept { return consumed_count_; }
  /// tokens * r * sizeof(double) while materialised, else 0.
  std::uint64_t bytes() const noexcept;

 private:
  std::string group_id_;
  std::string produced_by_;
  std::optional<Matrix> r_cached_;
  std::size_t produced_count_ = 0;
  std::size_t consumed_count_ = 0;
};

struct ModuleOutput {
  std::string module_id;
  Matrix y;  // tokens x O_i
};

using WeightMap = std::map<std::string, QuantizedLinear, std::less<>>;

/// x W_q^T for one quantized module.
Matrix quantized_forward(const Matrix& x, const QuantizedLinear& q);

/// Group forward with the shared right factor. When restore_active is set
/// the projection x B^T is formed once (the anchor produces it, every member
/// including the anchor reads it) and each output gains R A_i^T. When unset
/// only the quantized path runs and no cache is touched. Non-solo active
/// groups charge tokens * r * 8 bytes of cache. Outputs follow members().
/// `cache`, if given, must be fresh or reset.
std::vector<ModuleOutput> cached_forward(const Matrix& x, const LayerGroup& group,
                                         const WeightMap& weights, const SharedFactors& factors,
                                         bool restore_active, CostLedger& ledger,
                                         CorrectionCache* cache = nullptr);

/// Per-module baseline: every module recomputes its own x B_i^T.
std::vector<ModuleOutput> layerwise_forward(const Matrix& x, const LayerGroup& group,
                                            const WeightMap& weights,
                                            std::span<const LayerFactors> factors,
                                            bool restore_active, CostLedger& ledger);

enum class FactorMode { shared, layerwise };

/// Low-rank parameter count for a group with the given output dims:
/// shared = sum O_i r + r d, layerwise = sum (O_i r + r d).
std::uint64_t param_count(std::span<const std::size_t> out_dims, std::size_t in_dim,
                          std::size_t rank, FactorMode mode);
std::uint64_t param_count(const SharedFactors& factors);
std::uint64_t param_count(std::span<const LayerFactors> factors);

struct LedgerRow {
  std::string group_id;
  std::string mode;
  CostLedger ledger;
};

/// Header: group_id,mode,flops_quantized,flops_right_proj,flops_left_apply,
/// params_lowrank,bytes_cache.
std::string ledger_csv(std::span<const LedgerRow> rows);

}  // namespace glowq

#endif  // GLOWQ_RUNTIME_HPP_
