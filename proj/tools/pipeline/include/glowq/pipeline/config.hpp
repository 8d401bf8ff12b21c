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

#ifndef GLOWQ_PIPELINE_CONFIG_HPP_
#define GLOWQ_PIPELINE_CONFIG_HPP_

// Run configuration: one JSON document, schema version 1. See docs/formats.md.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glowq/calib.hpp"
#include "glowq/quant.hpp"
#include "glowq/runtime.hpp"
#include "glowq/select.hpp"
#include "glowq/solver.hpp"

namespace glowq::pipeline {

inline constexpr int kSchemaVersion = 1;

/// Synthetic decoder stack: every layer has q, k, v, o, gate, up and down.
struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t kv_dim = 32;
  std::size_t intermediate = 96;
  /// Per-module weight scales are exp(spread * z), z ~ N(0, 1).
  double scale_spread = 0.5;

  std::vector<ModuleSpec> modules() const;
};

enum class CovSource { synthetic, file };

struct CovarianceConfig {
  CovSource source = CovSource::synthetic;
  double alpha = 1.19;
  double scale = 1.0;
  std::size_t samples = 4096;
  double shrink_alpha = kDefaultShrinkAlpha;
  /// ridge_eps = ridge_factor * trace(S) / d.
  double ridge_factor = kDefaultRidgeFactor;
  MomentMode moment = MomentMode::second_moment;
  /// For source = file: input dim -> covariance stem (GLXM + JSON sidecar).
  std::map<std::size_t, std::filesystem::path> files;
};

enum class SolveMode { exact, rsvd };

struct SolveSection {
  std::size_t rank = 16;
  std::size_t oversampling = 16;
  std::size_t power_iters = 2;
  bool whiten = true;
  SolveMode mode = SolveMode::rsvd;
};

struct SweepSection {
  std::vector<double> fractions{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<Metric> metrics;  // defaults to all five
};

struct SimulateSection {
  std::size_t tokens = 32;
  double selective_fraction = 0.5;
  Metric selective_metric = Metric::energy_capture;
};

struct AnalyzeSection {
  std::vector<std::size_t> ranks{4, 8, 16, 32};
  std::size_t range_trials = 50;
};

struct VerifySection {
  std::size_t trials = 50;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "glowq-run";
  ModelConfig model;
  QuantConfig quant;
  CovarianceConfig covariance;
  SolveSection solve;
  SweepSection sweep;
  SimulateSection simulate;
  AnalyzeSection analyze;
  VerifySection verify;

  /// Cross-section checks (rank against group shapes, fractions, ...).
  /// Throws ValidationError. Does not touch the filesystem.
  void validate() const;
  /// Canonical JSON text without output_dir; its FNV-1a hash identifies
  /// the experiment independently of where it is written.
  std::string canonical_json() const;
  std::string hash() const;
};

/// Parses and validates. Unknown keys are rejected.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);

std::string_view to_string(SolveMode m) noexcept;
SolveMode parse_solve_mode(std::string_view s);

}  // namespace glowq::pipeline

#endif  // GLOWQ_PIPELINE_CONFIG_HPP_
