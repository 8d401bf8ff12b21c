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

#include "glowq/select.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "glowq/errors.hpp"
#include "glowq/format.hpp"
#include "glowq/linalg.hpp"

namespace glowq {

namespace {

constexpr std::array<std::string_view, 5> kMetricNames = {"ec", "ner", "fro", "cos", "order"};

bool low_first(Metric m) { return m == Metric::cosine || m == Metric::layer_order; }

Matrix stack_all(std::span<const Matrix> parts, const char* what) {
  if (parts.empty()) throw ValidationError(std::string(what) + ": no member matrices");
  return vstack(parts);
}

}  // namespace

std::string_view to_string(Metric m) noexcept { return kMetricNames[static_cast<std::size_t>(m)]; }

Metric parse_metric(std::string_view name) {
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
    if (kMetricNames[i] == name) return static_cast<Metric>(i);
  }
  throw ValidationError("unknown metric '" + std::string(name) + "'");
}

std::vector<Metric> all_metrics() {
  return {Metric::energy_capture, Metric::ner, Metric::frobenius, Metric::cosine,
          Metric::layer_order};
}

bool RestorePlan::contains(std::string_view unit_id) const {
  return std::find(active_units.begin(), active_units.end(), unit_id) != active_units.end();
}

double score_energy_capture(const Matrix& core_m, std::size_t r) {
  if (r == 0 || r > std::min(core_m.rows(), core_m.cols())) {
    throw ValidationError("score_energy_capture: rank out of range");
  }
  const double total = core_m.squared_norm();
  if (total == 0.0) return 0.0;
  const SvdResult s = svd(core_m);
  double head = 0.0;
  for (std::size_t j = 0; j < r; ++j) head += s.sigma[j] * s.sigma[j];
  // The ratio can exceed 1 by rounding; the score is a fraction.
  return std::clamp(head / total, 0.0, 1.0);
}

double score_ner(const Matrix& e, const Matrix& w) {
  if (e.rows() != w.rows() || e.cols() != w.cols()) throw ShapeError("score_ner: shape mismatch");
  const double wn = w.squared_norm();
  if (wn == 0.0) throw ValidationError("score_ner: weight matrix is zero");
  return e.squared_norm() / wn;
}

double score_frobenius(const Matrix& e) { return e.frobenius_norm(); }

double score_cosine(const Matrix& w, const Matrix& w_q) {
  if (w.rows() != w_q.rows() || w.cols() != w_q.cols()) {
    throw ShapeError("score_cosine: shape mismatch");
  }
  const double nw = w.frobenius_norm();
  const double nq = w_q.frobenius_norm();
  if (nw == 0.0 || nq == 0.0) throw ValidationError("score_cosine: zero matrix");
  return std::clamp(frobenius_dot(w, w_q) / (nw * nq), -1.0, 1.0);
}

RestorePlan select_topk(std::span<const UnitScore> scores, double fraction) {
  if (scores.empty()) throw ValidationError("select_topk: no scores");
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ValidationError("select_topk: budget fraction must lie in [0, 1]");
  }
  const Metric metric = scores.front().metric;
  std::set<std::string_view> seen;
  for (const auto& s : scores) {
    if (s.metric != metric) throw ValidationError("select_topk: scores mix metrics");
    if (!seen.insert(s.unit_id).second) {
      throw ValidationError("select_topk: duplicate unit '" + s.unit_id + "'");
    }
    if (!std::isfinite(s.value)) throw ValidationError("select_topk: non-finite score");
  }
  std::vector<const UnitScore*> order;
  for (const auto& s : scores) order.push_back(&s);
  const bool asc = low_first(metric);
  std::sort(order.begin(), order.end(), [asc](const UnitScore* a, const UnitScore* b) {
    if (a->value != b->value) return asc ? a->value < b->value : a->value > b->value;
    return a->unit_id < b->unit_id;
  });
  const auto k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(order.size())));
  RestorePlan plan{{}, fraction, metric};
  for (std::size_t i = 0; i < k; ++i) plan.active_units.push_back(order[i]->unit_id);
  return plan;
}

std::vector<UnitScore> score_unit(std::string_view unit_id, std::size_t layer_index,
                                  std::span<const Matrix> weights,
                                  std::span<const Matrix> dequantized, const Matrix& core_m,
                                  std::size_t r) {
  const Matrix w = stack_all(weights, "score_unit");
  const Matrix wq = stack_all(dequantized, "score_unit");
  const Matrix e = w - wq;
  const std::string id(unit_id);
  return {
      {id, Metric::energy_capture, score_energy_capture(core_m, r)},
      {id, Metric::ner, score_ner(e, w)},
      {id, Metric::frobenius, score_frobenius(e)},
      {id, Metric::cosine, score_cosine(w, wq)},
      {id, Metric::layer_order, static_cast<double>(layer_index)},
  };
}

std::vector<SweepPoint> restoration_sweep(std::span<const UnitProfile> units,
                                          std::span<const UnitScore> scores,
                                          std::span<const double> fractions) {
  if (fractions.empty()) throw ValidationError("restoration_sweep: no fractions");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] <= 1.0)) {
      throw ValidationError("restoration_sweep: fraction outside [0, 1]");
    }
    if (i > 0 && !(fractions[i] > fractions[i - 1])) {
      throw ValidationError("restoration_sweep: fractions must be strictly increasing");
    }
  }
  std::map<std::string_view, const UnitProfile*> by_id;
  for (const auto& u : units) {
    if (!by_id.emplace(u.unit_id, &u).second) {
      throw ValidationError("restoration_sweep: duplicate unit '" + u.unit_id + "'");
    }
  }
  if (scores.size() != units.size()) {
    throw ValidationError("restoration_sweep: every unit needs exactly one score");
  }
  for (const auto& s : scores) {
    if (!by_id.count(s.unit_id)) {
      throw ValidationError("restoration_sweep: no profile for unit '" + s.unit_id + "'");
    }
  }

  std::vector<SweepPoint> out;
  for (double f : fractions) {
    const RestorePlan plan = select_topk(scores, f);
    const std::set<std::string_view> active(plan.active_units.begin(), plan.active_units.end());
    SweepPoint p{f, 0.0, 0, 0};
    // Accumulate in the caller's unit order so totals do not depend on the plan.
    for (const auto& u : units) {
      const bool on = active.count(u.unit_id) > 0;
      p.residual += on ? u.energy_corrected : u.energy_uncorrected;
      const CostLedger& c = on ? u.cost_active : u.cost_inactive;
      p.flops += c.total_flops();
      p.params += c.params_lowrank;
    }
    out.push_back(p);
  }
  return out;
}

double curve_auc(std::span<const SweepPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += 0.5 * (curve[i].residual + curve[i - 1].residual) *
            (curve[i].fraction - curve[i - 1].fraction);
  }
  return area;
}

std::optional<std::size_t> curve_elbow(std::span<const SweepPoint> curve) {
  if (curve.size() < 3) return std::nullopt;
  std::size_t best = 1;
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    const double d2 = curve[i - 1].residual - 2.0 * curve[i].residual + curve[i + 1].residual;
    if (d2 > best_val) {
      best_val = d2;
      best = i;
    }
  }
  return best;
}

std::string sweep_csv(std::span<const SweepSeries> series) {
  std::string out = "fraction,metric,residual,flops,params\n";
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      out += format_double(p.fraction) + "," + std::string(to_string(s.metric)) + "," +
             format_double(p.residual) + "," + std::to_string(p.flops) + "," +
             std::to_string(p.params) + "\n";
    }
  }
  return out;
}

}  // namespace glowq
