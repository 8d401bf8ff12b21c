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

#include "glowq/pipeline/config.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>

#include "glowq/errors.hpp"
#include "glowq/format.hpp"
#include "glowq/glxm.hpp"

namespace glowq::pipeline {

using nlohmann::json;

namespace {

// Rejects keys the schema does not know, so typos fail loudly.
void check_keys(const json& obj, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ValidationError(std::string(section) + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError(std::string(section) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, std::string_view section, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string(section) + "." + key + ": wrong type");
  }
}

void read_size(const json& obj, std::string_view section, const char* key, std::size_t& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ValidationError(std::string(section) + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

void read_finite(const json& obj, std::string_view section, const char* key, double& out) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number()) throw ValidationError(std::string(section) + "." + key + ": expected a number");
  out = obj.at(key).get<double>();
  if (!std::isfinite(out)) throw ValidationError(std::string(section) + "." + key + ": not finite");
}

std::string_view moment_name(MomentMode m) {
  return m == MomentMode::centered ? "centered" : "second_moment";
}

template <typename T>
bool strictly_increasing(const std::vector<T>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](T a, T b) { return !(a < b); }) == v.end();
}

}  // namespace

std::string_view to_string(SolveMode m) noexcept { return m == SolveMode::exact ? "exact" : "rsvd"; }

SolveMode parse_solve_mode(std::string_view s) {
  if (s == "exact") return SolveMode::exact;
  if (s == "rsvd") return SolveMode::rsvd;
  throw ValidationError("unknown solve mode '" + std::string(s) + "' (expected exact or rsvd)");
}

std::vector<ModuleSpec> ModelConfig::modules() const {
  std::vector<ModuleSpec> out;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "L" + std::to_string(l) + ".";
    out.push_back({p + "q", ModuleKind::q, l, hidden, hidden});
    out.push_back({p + "k", ModuleKind::k, l, hidden, kv_dim});
    out.push_back({p + "v", ModuleKind::v, l, hidden, kv_dim});
    out.push_back({p + "o", ModuleKind::o, l, hidden, hidden});
    out.push_back({p + "gate", ModuleKind::gate, l, hidden, intermediate});
    out.push_back({p + "up", ModuleKind::up, l, hidden, intermediate});
    out.push_back({p + "down", ModuleKind::down, l, intermediate, hidden});
  }
  return out;
}

void PipelineConfig::validate() const {
  if (model.layers == 0 || model.hidden == 0 || model.kv_dim == 0 || model.intermediate == 0) {
    throw ValidationError("model: layers and all dims must be >= 1");
  }
  if (!(model.scale_spread >= 0.0)) throw ValidationError("model.scale_spread must be >= 0");
  quant.validate();
  const auto& c = covariance;
  if (c.source == CovSource::synthetic) {
    SpectrumModel{model.hidden, c.alpha, c.scale}.validate();
  } else {
    for (std::size_t d : {model.hidden, model.intermediate}) {
      if (!c.files.contains(d)) {
        throw ValidationError("covariance.files: no covariance for input dim " + std::to_string(d));
      }
    }
  }
  if (c.samples == 0) throw ValidationError("covariance.samples must be >= 1");
  if (!(c.shrink_alpha >= 0.0 && c.shrink_alpha <= 1.0)) {
    throw ValidationError("covariance.shrink_alpha must lie in [0, 1]");
  }
  if (!(c.ridge_factor >= 0.0)) throw ValidationError("covariance.ridge_factor must be >= 0");

  // Every group must admit the rank: the smallest one is the solo o / down
  // block, and the sketch width r + p must fit the narrowest input dim.
  const std::size_t min_side = std::min(model.hidden, model.intermediate);
  if (solve.rank == 0 || solve.rank > min_side) {
    throw ValidationError("solve.rank must lie in [1, " + std::to_string(min_side) + "]");
  }
  if (solve.mode == SolveMode::rsvd && solve.rank + solve.oversampling > min_side) {
    throw ValidationError("solve.rank + solve.oversampling must be <= " + std::to_string(min_side));
  }

  if (sweep.fractions.empty() || !strictly_increasing(sweep.fractions) ||
      sweep.fractions.front() < 0.0 || sweep.fractions.back() > 1.0) {
    throw ValidationError("sweep.fractions must be strictly increasing inside [0, 1]");
  }
  if (sweep.metrics.empty()) throw ValidationError("sweep.metrics must not be empty");
  if (simulate.tokens == 0) throw ValidationError("simulate.tokens must be >= 1");
  if (!(simulate.selective_fraction >= 0.0 && simulate.selective_fraction <= 1.0)) {
    throw ValidationError("simulate.selective_fraction must lie in [0, 1]");
  }
  if (analyze.ranks.empty() || !strictly_increasing(analyze.ranks) || analyze.ranks.front() == 0) {
    throw ValidationError("analyze.ranks must be strictly increasing and >= 1");
  }
  if (analyze.range_trials == 0) throw ValidationError("analyze.range_trials must be >= 1");
  if (verify.trials == 0) throw ValidationError("verify.trials must be >= 1");
}

std::string PipelineConfig::canonical_json() const {
  json files = json::object();
  for (const auto& [d, p] : covariance.files) files[std::to_string(d)] = p.generic_string();
  json metrics = json::array();
  for (Metric m : sweep.metrics) metrics.push_back(std::string(to_string(m)));
  json j = {
      {"schema_version", kSchemaVersion},
      {"seed", seed},
      {"model",
       {{"layers", model.layers},
        {"hidden", model.hidden},
        {"kv_dim", model.kv_dim},
        {"intermediate", model.intermediate},
        {"scale_spread", model.scale_spread}}},
      {"quant", {{"bits", quant.bits}, {"group_size", quant.group_size}}},
      {"covariance",
       {{"source", covariance.source == CovSource::file ? "file" : "synthetic"},
        {"alpha", covariance.alpha},
        {"scale", covariance.scale},
        {"samples", covariance.samples},
        {"shrink_alpha", covariance.shrink_alpha},
        {"ridge_factor", covariance.ridge_factor},
        {"moment", moment_name(covariance.moment)},
        {"files", files}}},
      {"solve",
       {{"rank", solve.rank},
        {"oversampling", solve.oversampling},
        {"power_iters", solve.power_iters},
        {"whiten", solve.whiten},
        {"mode", to_string(solve.mode)}}},
      {"sweep", {{"fractions", sweep.fractions}, {"metrics", metrics}}},
      {"simulate",
       {{"tokens", simulate.tokens},
        {"selective_fraction", simulate.selective_fraction},
        {"selective_metric", to_string(simulate.selective_metric)}}},
      {"analyze", {{"ranks", analyze.ranks}, {"range_trials", analyze.range_trials}}},
      {"verify", {{"trials", verify.trials}}},
  };
  return j.dump();
}

std::string PipelineConfig::hash() const { return hex64(fnv1a64(canonical_json())); }

PipelineConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  check_keys(root, "config",
             {"schema_version", "seed", "output_dir", "model", "quant", "covariance", "solve",
              "sweep", "simulate", "analyze", "verify"});
  if (!root.contains("schema_version") || root.at("schema_version") != kSchemaVersion) {
    throw ValidationError("config: schema_version must be " + std::to_string(kSchemaVersion));
  }
  PipelineConfig c;
  c.sweep.metrics = all_metrics();
  read(root, "config", "seed", c.seed);
  std::string out_dir = c.output_dir.string();
  read(root, "config", "output_dir", out_dir);
  c.output_dir = out_dir;

  if (root.contains("model")) {
    const json& m = root.at("model");
    check_keys(m, "model", {"layers", "hidden", "kv_dim", "intermediate", "scale_spread"});
    read_size(m, "model", "layers", c.model.layers);
    read_size(m, "model", "hidden", c.model.hidden);
    read_size(m, "model", "kv_dim", c.model.kv_dim);
    read_size(m, "model", "intermediate", c.model.intermediate);
    read_finite(m, "model", "scale_spread", c.model.scale_spread);
  }
  if (root.contains("quant")) {
    const json& q = root.at("quant");
    check_keys(q, "quant", {"bits", "group_size"});
    read(q, "quant", "bits", c.quant.bits);
    read_size(q, "quant", "group_size", c.quant.group_size);
  }
  if (root.contains("covariance")) {
    const json& v = root.at("covariance");
    check_keys(v, "covariance",
               {"source", "alpha", "scale", "samples", "shrink_alpha", "ridge_factor", "moment", "files"});
    std::string source = "synthetic";
    read(v, "covariance", "source", source);
    if (source == "file") {
      c.covariance.source = CovSource::file;
    } else if (source != "synthetic") {
      throw ValidationError("covariance.source must be synthetic or file");
    }
    read_finite(v, "covariance", "alpha", c.covariance.alpha);
    read_finite(v, "covariance", "scale", c.covariance.scale);
    read_size(v, "covariance", "samples", c.covariance.samples);
    read_finite(v, "covariance", "shrink_alpha", c.covariance.shrink_alpha);
    read_finite(v, "covariance", "ridge_factor", c.covariance.ridge_factor);
    std::string moment = "second_moment";
    read(v, "covariance", "moment", moment);
    if (moment == "centered") {
      c.covariance.moment = MomentMode::centered;
    } else if (moment != "second_moment") {
      throw ValidationError("covariance.moment must be second_moment or centered");
    }
    if (v.contains("files")) {
      const json& f = v.at("files");
      if (!f.is_object()) throw ValidationError("covariance.files: expected an object");
      for (const auto& [key, path] : f.items()) {
        std::size_t dim = 0;
        try {
          std::size_t used = 0;
          dim = std::stoul(key, &used);
          if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
          throw ValidationError("covariance.files: key '" + key + "' is not an input dim");
        }
        if (!path.is_string()) throw ValidationError("covariance.files: paths must be strings");
        c.covariance.files[dim] = path.get<std::string>();
      }
    }
  }
  if (root.contains("solve")) {
    const json& s = root.at("solve");
    check_keys(s, "solve", {"rank", "oversampling", "power_iters", "whiten", "mode"});
    read_size(s, "solve", "rank", c.solve.rank);
    read_size(s, "solve", "oversampling", c.solve.oversampling);
    read_size(s, "solve", "power_iters", c.solve.power_iters);
    read(s, "solve", "whiten", c.solve.whiten);
    std::string mode(to_string(c.solve.mode));
    read(s, "solve", "mode", mode);
    c.solve.mode = parse_solve_mode(mode);
  }
  if (root.contains("sweep")) {
    const json& s = root.at("sweep");
    check_keys(s, "sweep", {"fractions", "metrics"});
    read(s, "sweep", "fractions", c.sweep.fractions);
    if (s.contains("metrics")) {
      std::vector<std::string> names;
      read(s, "sweep", "metrics", names);
      c.sweep.metrics.clear();
      for (const auto& n : names) c.sweep.metrics.push_back(parse_metric(n));
    }
  }
  if (root.contains("simulate")) {
    const json& s = root.at("simulate");
    check_keys(s, "simulate", {"tokens", "selective_fraction", "selective_metric"});
    read_size(s, "simulate", "tokens", c.simulate.tokens);
    read_finite(s, "simulate", "selective_fraction", c.simulate.selective_fraction);
    if (s.contains("selective_metric")) {
      std::string name;
      read(s, "simulate", "selective_metric", name);
      c.simulate.selective_metric = parse_metric(name);
    }
  }
  if (root.contains("analyze")) {
    const json& a = root.at("analyze");
    check_keys(a, "analyze", {"ranks", "range_trials"});
    read(a, "analyze", "ranks", c.analyze.ranks);
    read_size(a, "analyze", "range_trials", c.analyze.range_trials);
  }
  if (root.contains("verify")) {
    const json& v = root.at("verify");
    check_keys(v, "verify", {"trials"});
    read_size(v, "verify", "trials", c.verify.trials);
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = glxm::read_text(path);
  } catch (const IoError& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return parse_config(text);
}

}  // namespace glowq::pipeline
