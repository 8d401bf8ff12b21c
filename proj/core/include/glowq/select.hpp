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

#ifndef GLOWQ_SELECT_HPP_
#define GLOWQ_SELECT_HPP_

// Ranking of correction units (groups or solo modules) for selective
// restoration under a budget, and residual-versus-cost sweeps.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glowq/matrix.hpp"
#include "glowq/runtime.hpp"

namespace glowq {

enum class Metric { energy_capture, ner, frobenius, cosine, layer_order };

/// Short names: ec, ner, fro, cos, order.
std::string_view to_string(Metric m) noexcept;
/// Accepts the short names. Throws ValidationError otherwise.
Metric parse_metric(std::string_view name);
std::vector<Metric> all_metrics();

struct UnitScore {
  std::string unit_id;
  Metric metric = Metric::energy_capture;
  double value = 0.0;
};

struct RestorePlan {
  std::vector<std::string> active_units;  // highest priority first
  double budget_fraction = 0.0;
  Metric metric = Metric::energy_capture;

  bool contains(std::string_view unit_id) const;
};

/// sum_{j<=r} sigma_j^2 / ||m||_F^2; 0 for the zero matrix.
/// Requires 1 <= r <= min(rows, cols).
double score_energy_capture(const Matrix& core_m, std::size_t r);
/// ||e||_F^2 / ||w||_F^2. Throws ValidationError for w = 0.
double score_ner(const Matrix& e, const Matrix& w);
double score_frobenius(const Matrix& e);
/// Flattened cosine similarity. Throws ValidationError if either is zero.
double score_cosine(const Matrix& w, const Matrix& w_q);

/// Sorts by restore priority and keeps the first round(fraction * n)
/// (halves round away from zero). energy_capture, ner and frobenius rank
/// high values first; cosine and layer_order rank low values first. Equal
/// values are ordered by unit_id. Throws ValidationError for an empty list,
/// mixed metrics, duplicate units or a fraction outside [0, 1].
RestorePlan select_topk(std::span<const UnitScore> scores, double fraction);

/// All five scores for one unit. Members are stacked row-wise; core_m is the
/// (whitened) matrix whose spectrum feeds the energy-capture score.
std::vector<UnitScore> score_unit(std::string_view unit_id, std::size_t layer_index,
                                  std::span<const Matrix> weights,
                                  std::span<const Matrix> dequantized, const Matrix& core_m,
                                  std::size_t r);

/// Everything a sweep needs to know about one unit.
struct UnitProfile {
  std::string unit_id;
  double energy_uncorrected = 0.0;  // ||E_u Sigma^{1/2}||_F^2
  double energy_corrected = 0.0;    // ||(E_u - A_u B_u) Sigma^{1/2}||_F^2
  CostLedger cost_inactive;
  CostLedger cost_active;
};

struct SweepPoint {
  double fraction = 0.0;
  double residual = 0.0;  // summed squared weighted residual over units
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

/// For each fraction, restores select_topk(scores, fraction) and totals
/// residual energy and cost over all units. Fractions must be strictly
/// increasing inside [0, 1]. Throws ValidationError when a scored unit has
/// no profile or the reverse.
std::vector<SweepPoint> restoration_sweep(std::span<const UnitProfile> units,
                                          std::span<const UnitScore> scores,
                                          std::span<const double> fractions);

/// Trapezoid area under residual(fraction).
double curve_auc(std::span<const SweepPoint> curve);

/// Interior index with the largest discrete second difference of the
/// residual column, a heuristic operating point. nullopt for fewer than
/// three points.
std::optional<std::size_t> curve_elbow(std::span<const SweepPoint> curve);

struct SweepSeries {
  Metric metric = Metric::energy_capture;
  std::vector<SweepPoint> points;
};

/// Header: fraction,metric,residual,flops,params.
std::string sweep_csv(std::span<const SweepSeries> series);

}  // namespace glowq

#endif  // GLOWQ_SELECT_HPP_
