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

#include "glowq/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <set>
#include <thread>

#include "glowq/analysis.hpp"
#include "glowq/calib.hpp"
#include "glowq/errors.hpp"
#include "glowq/format.hpp"
#include "glowq/glxm.hpp"
#include "glowq/linalg.hpp"
#include "glowq/quant.hpp"
#include "glowq/rng.hpp"
#include "glowq/select.hpp"

#ifndef GLOWQ_VERSION
#define GLOWQ_VERSION "0.0.0"
#endif

namespace glowq::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t thread_budget() {
  const char* env = std::getenv("GLOWQ_THREADS");
  if (env == nullptr) return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(env, &end, 10);
  if (end == env || *end != '\0' || n == 0) return 1;
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  return std::min<std::size_t>(n, hw);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_budget(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      std::size_t i = 0;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= n || first_error) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

std::string dim_tag(std::size_t d) { return "d" + std::to_string(d); }

fs::path with_suffix(fs::path p, const char* suffix) {
  p += suffix;
  return p;
}

std::vector<std::size_t> input_dims(const ModelConfig& m) {
  std::vector<std::size_t> dims{m.hidden, m.intermediate};
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  return dims;
}

json read_json(const fs::path& p) {
  try {
    return json::parse(glxm::read_text(p));
  } catch (const json::exception& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  modules_ = cfg_.model.modules();
  groups_ = plan_groups(modules_);
  const fs::path manifest = root() / "manifest.json";
  if (fs::exists(manifest)) {
    const json m = read_json(manifest);
    if (m.value("config_hash", std::string()) != cfg_.hash()) {
      throw ValidationError(root().string() +
                            " holds a run with a different configuration; choose another --out");
    }
  }
}

const ModuleSpec& Pipeline::spec(const std::string& module_id) const {
  for (const auto& m : modules_) {
    if (m.id == module_id) return m;
  }
  throw ValidationError("unknown module '" + module_id + "'");
}

std::size_t Pipeline::in_dim(const LayerGroup& g) const { return spec(g.anchor).in_dim; }

fs::path Pipeline::weight_path(const std::string& id) const { return root() / "weights" / (id + ".glxm"); }
fs::path Pipeline::quant_stem(const std::string& id) const { return root() / "quant" / id; }
fs::path Pipeline::calib_stem(std::size_t d) const { return root() / "calib" / dim_tag(d); }
fs::path Pipeline::factor_dir(const std::string& gid) const { return root() / "factors" / gid; }

void Pipeline::require(const fs::path& p, const char* stage) const {
  if (!fs::exists(p)) {
    throw IoError("missing input " + p.string() + " (run '" + stage + "' first)");
  }
}

void Pipeline::record(const std::string& command, std::vector<std::string> files) {
  const fs::path manifest = root() / "manifest.json";
  json m = fs::exists(manifest) ? read_json(manifest) : json::object();
  m["tool"] = "glowq";
  m["version"] = GLOWQ_VERSION;
  m["schema_version"] = kSchemaVersion;
  m["seed"] = cfg_.seed;
  m["config_hash"] = cfg_.hash();
  m["config"] = json::parse(cfg_.canonical_json());
  std::sort(files.begin(), files.end());
  m["artifacts"][command] = files;
  glxm::write_text_atomic(manifest, m.dump(2) + "\n");
}

Matrix Pipeline::true_covariance(std::size_t dim) const {
  const fs::path p = root() / "cov" / ("true_" + dim_tag(dim) + ".glxm");
  require(p, "gen");
  return glxm::load(p);
}

Matrix Pipeline::calibrated(std::size_t dim) const {
  const fs::path stem = calib_stem(dim);
  require(with_suffix(stem, ".json"), "calibrate");
  return load_covariance(stem).sigma;
}

StackedError Pipeline::group_error(const LayerGroup& g) const {
  std::vector<ErrorBlock> blocks;
  for (const auto& id : g.members()) {
    require(weight_path(id), "gen");
    require(with_suffix(quant_stem(id), ".json"), "quantize");
    blocks.push_back({id, error_matrix(glxm::load(weight_path(id)), load_quantized(quant_stem(id)))});
  }
  return StackedError::stack(std::move(blocks));
}

WeightMap Pipeline::group_weights(const LayerGroup& g) const {
  WeightMap w;
  for (const auto& id : g.members()) {
    require(with_suffix(quant_stem(id), ".json"), "quantize");
    w.emplace(id, load_quantized(quant_stem(id)));
  }
  return w;
}

void Pipeline::gen() {
  std::vector<std::string> files;
  fs::create_directories(root() / "weights");
  fs::create_directories(root() / "cov");
  const CounterRng scale_rng(derive_seed(cfg_.seed, "weight.scale"));
  for (std::size_t i = 0; i < modules_.size(); ++i) {
    const auto& m = modules_[i];
    const double scale = std::exp(cfg_.model.scale_spread * scale_rng.normal(i)) /
                         std::sqrt(static_cast<double>(m.in_dim));
    const Matrix w = scale * gaussian_matrix(m.out_dim, m.in_dim, derive_seed(cfg_.seed, "weight." + m.id));
    glxm::save(weight_path(m.id), w);
    files.push_back("weights/" + m.id + ".glxm");
  }
  if (cfg_.covariance.source == CovSource::synthetic) {
    for (std::size_t d : input_dims(cfg_.model)) {
      const SpectrumModel spectrum{d, cfg_.covariance.alpha, cfg_.covariance.scale};
      const std::string name = "true_" + dim_tag(d) + ".glxm";
      glxm::save(root() / "cov" / name,
                 synth_covariance(spectrum, derive_seed(cfg_.seed, "cov." + dim_tag(d))));
      files.push_back("cov/" + name);
    }
  }
  record("gen", std::move(files));
}

void Pipeline::quantize() {
  std::vector<std::string> files;
  fs::create_directories(root() / "quant");
  for (const auto& m : modules_) {
    require(weight_path(m.id), "gen");
    save_quantized(quant_stem(m.id), glowq::quantize(glxm::load(weight_path(m.id)), cfg_.quant));
    for (const char* ext : {".codes.glxm", ".scales.glxm", ".json"}) files.push_back("quant/" + m.id + ext);
  }
  record("quantize", std::move(files));
}

void Pipeline::calibrate() {
  std::vector<std::string> files;
  fs::create_directories(root() / "calib");
  const auto& c = cfg_.covariance;
  for (std::size_t d : input_dims(cfg_.model)) {
    CovarianceEstimate est{Matrix(1, 1)};
    if (c.source == CovSource::synthetic) {
      CovarianceAccumulator acc(d);
      acc.accumulate(sample_inputs(true_covariance(d), c.samples, derive_seed(cfg_.seed, "calib." + dim_tag(d))));
      const double eps = c.ridge_factor / kDefaultRidgeFactor * default_ridge_eps(acc);
      est = finalize(acc, c.shrink_alpha, eps, c.moment);
    } else {
      est = load_covariance(c.files.at(d));
      if (est.dim() != d) {
        throw ValidationError("covariance file for dim " + std::to_string(d) + " has dim " +
                              std::to_string(est.dim()));
      }
    }
    save_covariance(calib_stem(d), est);
    files.push_back("calib/" + dim_tag(d) + ".glxm");
    files.push_back("calib/" + dim_tag(d) + ".json");
  }
  record("calibrate", std::move(files));
}

void Pipeline::solve() {
  const auto& s = cfg_.solve;
  std::vector<std::vector<std::string>> written(groups_.size());
  parallel_for(groups_.size(), [&](std::size_t gi) {
    const LayerGroup& g = groups_[gi];
    const StackedError se = group_error(g);
    const Matrix cov = calibrated(in_dim(g));
    const std::uint64_t seed = derive_seed(cfg_.seed, "solve." + g.group_id);
    SharedFactors f = [&] {
      if (s.mode == SolveMode::exact) {
        return s.whiten ? qr_reduced_exact(se, cov, s.rank).factors : solve_unweighted(se, s.rank);
      }
      SolveConfig sc;
      sc.rank = s.rank;
      sc.oversampling = s.oversampling;
      sc.power_iters = s.power_iters;
      sc.whiten = s.whiten;
      sc.seed = seed;
      return qr_reduced_rsvd(se, cov, sc).factors;
    }();
    const fs::path dir = factor_dir(g.group_id);
    fs::create_directories(dir);
    const std::string rel = "factors/" + g.group_id + "/";
    glxm::save(dir / "B.glxm", f.b_shared);
    written[gi].push_back(rel + "B.glxm");
    json modules = json::array();
    for (const auto& blk : f.a_blocks) {
      glxm::save(dir / ("A." + blk.module_id + ".glxm"), blk.a);
      written[gi].push_back(rel + "A." + blk.module_id + ".glxm");
      modules.push_back(blk.module_id);
    }
    const json meta = {
        {"group_id", g.group_id},
        {"modules", modules},
        {"rank", f.rank},
        {"whitened", f.whitened},
        {"mode", to_string(s.mode)},
        {"seed", seed},
        {"residual_weighted", f.residual_weighted},
        {"residual_unweighted", f.residual_unweighted},
        {"config_hash", cfg_.hash()},
    };
    glxm::write_text_atomic(dir / "factors.json", meta.dump(2) + "\n");
    written[gi].push_back(rel + "factors.json");
  });
  std::vector<std::string> files;
  for (auto& w : written) files.insert(files.end(), w.begin(), w.end());
  record("solve", std::move(files));
}

SharedFactors Pipeline::load_factors(const LayerGroup& g) const {
  const fs::path dir = factor_dir(g.group_id);
  require(dir / "factors.json", "solve");
  const json meta = read_json(dir / "factors.json");
  try {
    SharedFactors f{{}, glxm::load(dir / "B.glxm"), meta.at("rank").get<std::size_t>(),
                    meta.at("whitened").get<bool>(), meta.at("residual_weighted").get<double>(),
                    meta.at("residual_unweighted").get<double>()};
    for (const auto& id : meta.at("modules")) {
      const std::string module_id = id.get<std::string>();
      f.a_blocks.push_back({module_id, glxm::load(dir / ("A." + module_id + ".glxm"))});
    }
    if (f.b_shared.rows() != f.rank) throw IoError((dir / "B.glxm").string() + ": rank mismatch");
    for (const auto& blk : f.a_blocks) {
      if (blk.a.cols() != f.rank || blk.a.rows() != spec(blk.module_id).out_dim) {
        throw IoError((dir / ("A." + blk.module_id + ".glxm")).string() + ": shape mismatch");
      }
    }
    return f;
  } catch (const json::exception& e) {
    throw IoError((dir / "factors.json").string() + ": " + e.what());
  }
}

namespace {

struct UnitData {
  std::vector<UnitScore> scores;
  UnitProfile profile;
};

std::vector<UnitScore> pick(const std::vector<UnitData>& units, Metric m) {
  std::vector<UnitScore> out;
  for (const auto& u : units) {
    for (const auto& s : u.scores) {
      if (s.metric == m) out.push_back(s);
    }
  }
  return out;
}

}  // namespace

// Scores and cost profile of every group, shared by sweep and simulate.
static std::vector<UnitData> profile_units(const Pipeline& p, const std::vector<ModuleSpec>& modules,
                                           const std::function<Matrix(std::size_t)>& cov_of,
                                           const std::function<StackedError(const LayerGroup&)>& err_of,
                                           const std::function<WeightMap(const LayerGroup&)>& w_of) {
  const auto& cfg = p.config();
  const auto& groups = p.groups();
  std::vector<UnitData> units(groups.size());
  parallel_for(groups.size(), [&](std::size_t gi) {
    const LayerGroup& g = groups[gi];
    const ModuleSpec* anchor = nullptr;
    for (const auto& m : modules) {
      if (m.id == g.anchor) anchor = &m;
    }
    const Matrix cov = cov_of(anchor->in_dim);
    const Matrix root = psd_sqrt(cov, SqrtMode::sqrt);
    const StackedError se = err_of(g);
    const WeightMap weights = w_of(g);
    const SharedFactors f = p.load_factors(g);

    std::vector<Matrix> w;
    std::vector<Matrix> wq;
    for (const auto& id : g.members()) {
      wq.push_back(dequantize(weights.at(id)));
      w.push_back(glxm::load(p.weight_path(id)));
    }
    const Matrix e = se.concatenated();
    const Matrix core = e * root;
    UnitData& u = units[gi];
    u.scores = score_unit(g.group_id, anchor->layer, w, wq, core, std::min(f.rank, std::min(core.rows(), core.cols())));
    u.profile.unit_id = g.group_id;
    u.profile.energy_uncorrected = core.squared_norm();
    u.profile.energy_corrected = ((e - f.stacked_a() * f.b_shared) * root).squared_norm();
    const Matrix x(cfg.simulate.tokens, anchor->in_dim);
    cached_forward(x, g, weights, f, false, u.profile.cost_inactive);
    cached_forward(x, g, weights, f, true, u.profile.cost_active);
  });
  return units;
}

void Pipeline::sweep() {
  const auto units = profile_units(
      *this, modules_, [this](std::size_t d) { return calibrated(d); },
      [this](const LayerGroup& g) { return group_error(g); },
      [this](const LayerGroup& g) { return group_weights(g); });
  std::vector<UnitProfile> profiles;
  for (const auto& u : units) profiles.push_back(u.profile);
  std::vector<SweepSeries> series;
  json summary = json::object();
  for (Metric m : cfg_.sweep.metrics) {
    const auto scores = pick(units, m);
    SweepSeries s{m, restoration_sweep(profiles, scores, cfg_.sweep.fractions)};
    const auto elbow = curve_elbow(s.points);
    summary[std::string(to_string(m))] = {
        {"auc", curve_auc(s.points)},
        {"elbow_fraction", elbow ? json(s.points[*elbow].fraction) : json(nullptr)},
    };
    series.push_back(std::move(s));
  }
  glxm::write_text_atomic(root() / "sweep.csv", sweep_csv(series));
  glxm::write_text_atomic(root() / "sweep_summary.json", summary.dump(2) + "\n");
  record("sweep", {"sweep.csv", "sweep_summary.json"});
}

void Pipeline::simulate() {
  const auto units = profile_units(
      *this, modules_, [this](std::size_t d) { return calibrated(d); },
      [this](const LayerGroup& g) { return group_error(g); },
      [this](const LayerGroup& g) { return group_weights(g); });
  const auto plan = select_topk(pick(units, cfg_.simulate.selective_metric), cfg_.simulate.selective_fraction);

  std::vector<std::vector<LedgerRow>> per_group(groups_.size());
  parallel_for(groups_.size(), [&](std::size_t gi) {
    const LayerGroup& g = groups_[gi];
    const std::size_t d = in_dim(g);
    const Matrix cov = calibrated(d);
    const StackedError se = group_error(g);
    const WeightMap weights = group_weights(g);
    const SharedFactors f = load_factors(g);
    std::vector<LayerFactors> lf;
    for (const auto& blk : se.blocks()) {
      lf.push_back(layerwise_solve(blk, cov, cfg_.solve.rank, cfg_.solve.whiten));
    }
    const Matrix x = sample_inputs(cov, cfg_.simulate.tokens, derive_seed(cfg_.seed, "simulate." + dim_tag(d)));
    LedgerRow layerwise{g.group_id, "layerwise", {}};
    layerwise_forward(x, g, weights, lf, true, layerwise.ledger);
    layerwise.ledger.params_lowrank = param_count(lf);
    LedgerRow cached{g.group_id, "cached", {}};
    cached_forward(x, g, weights, f, true, cached.ledger);
    cached.ledger.params_lowrank = param_count(f);
    LedgerRow selective{g.group_id, "selective", {}};
    const bool active = plan.contains(g.group_id);
    cached_forward(x, g, weights, f, active, selective.ledger);
    selective.ledger.params_lowrank = active ? param_count(f) : 0;
    per_group[gi] = {layerwise, cached, selective};
  });
  std::vector<LedgerRow> rows;
  LedgerRow totals[3] = {{"total", "layerwise", {}}, {"total", "cached", {}}, {"total", "selective", {}}};
  for (const auto& g : per_group) {
    for (std::size_t k = 0; k < 3; ++k) {
      rows.push_back(g[k]);
      totals[k].ledger += g[k].ledger;
    }
  }
  rows.insert(rows.end(), std::begin(totals), std::end(totals));
  glxm::write_text_atomic(root() / "ledger.csv", ledger_csv(rows));
  record("simulate", {"ledger.csv"});
}

void Pipeline::analyze() {
  fs::create_directories(root() / "analysis");
  const std::size_t r = cfg_.solve.rank;
  std::string energy = "group_id,rank,capture,whitened\n";
  std::vector<AlignmentMap> whitened_maps;
  std::vector<AlignmentMap> plain_maps;
  const LayerGroup* trial_group = nullptr;
  for (const auto& g : groups_) {
    const StackedError se = group_error(g);
    const Matrix cov = calibrated(in_dim(g));
    std::vector<std::size_t> ranks;
    for (std::size_t k : cfg_.analyze.ranks) {
      if (k <= std::min(se.total_rows(), se.input_dim())) ranks.push_back(k);
    }
    for (const Matrix* c : {static_cast<const Matrix*>(nullptr), &cov}) {
      const std::string csv = energy_curve_csv(energy_capture_curve(se, c, ranks));
      std::size_t pos = csv.find('\n') + 1;
      while (pos < csv.size()) {
        const std::size_t eol = csv.find('\n', pos);
        energy += g.group_id + "," + csv.substr(pos, eol - pos + 1);
        pos = eol + 1;
      }
    }
    if (g.solo) continue;
    if (trial_group == nullptr) trial_group = &g;
    std::size_t rk = r;
    for (const auto& b : se.blocks()) rk = std::min(rk, b.error.rows());
    const Matrix root_cov = psd_sqrt(cov, SqrtMode::sqrt);
    const Matrix shared_w = right_basis(se.concatenated() * root_cov, rk);
    const Matrix shared_u = right_basis(se.concatenated(), rk);
    for (const auto& b : se.blocks()) {
      whitened_maps.push_back(alignment_heatmap(b.module_id, shared_w, right_basis(b.error * root_cov, rk)));
      plain_maps.push_back(alignment_heatmap(b.module_id, shared_u, right_basis(b.error, rk)));
    }
  }
  glxm::write_text_atomic(root() / "analysis" / "energy.csv", energy);
  glxm::write_text_atomic(root() / "analysis" / "alignment_whitened.csv", alignment_csv(whitened_maps));
  glxm::write_text_atomic(root() / "analysis" / "alignment_unweighted.csv", alignment_csv(plain_maps));
  std::vector<std::string> files{"analysis/energy.csv", "analysis/alignment_whitened.csv",
                                 "analysis/alignment_unweighted.csv"};
  if (trial_group != nullptr) {
    const StackedError se = group_error(*trial_group);
    const Matrix core =
        qr_reduced_exact(se, calibrated(in_dim(*trial_group)), r).workspace.core;
    std::vector<RangeTrialCell> grid;
    for (std::size_t p : {2u, 4u, 8u, 16u}) {
      for (std::size_t q : {0u, 1u, 2u}) {
        if (r + p <= core.cols()) grid.push_back({p, q});
      }
    }
    const auto rows = rsvd_bound_trial(core, r, grid, cfg_.analyze.range_trials,
                                       derive_seed(cfg_.seed, "analyze.range"));
    glxm::write_text_atomic(root() / "analysis" / "range_trials.csv", range_trial_csv(rows));
    files.push_back("analysis/range_trials.csv");
  }
  record("analyze", std::move(files));
}

}  // namespace glowq::pipeline
