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

#ifndef GLOWQ_PIPELINE_PIPELINE_HPP_
#define GLOWQ_PIPELINE_PIPELINE_HPP_

// File-backed pipeline behind the glowq command line. Each stage reads the
// previous stage's artifacts from the run directory and writes its own with
// whole-file atomic writes. The layout is documented in docs/formats.md.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "glowq/pipeline/config.hpp"
#include "glowq/runtime.hpp"
#include "glowq/solver.hpp"

namespace glowq::pipeline {

enum class ExitCode : int { ok = 0, validation = 1, numerical = 2, invariant = 3 };

/// One named check with its measured value. passed iff value <= limit.
struct Invariant {
  std::string name;
  std::string scope;  // group id, or "run"
  double value = 0.0;
  double limit = 0.0;
  bool passed = false;
  std::string detail;  // set when the check could not be evaluated
};

struct VerifyReport {
  std::vector<Invariant> invariants;

  bool passed() const;
  /// Deterministic JSON document (no timestamps or paths).
  std::string to_json() const;
};

/// Worker count from GLOWQ_THREADS, capped by the hardware; 1 when unset or invalid.
std::size_t thread_budget();

/// Runs fn(0) .. fn(n - 1) on up to thread_budget() threads. Work items must
/// write only to their own slot. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

class Pipeline {
 public:
  /// Refuses a run directory whose manifest records a different config hash.
  explicit Pipeline(PipelineConfig cfg);

  const PipelineConfig& config() const noexcept { return cfg_; }
  const std::filesystem::path& root() const noexcept { return cfg_.output_dir; }
  const std::vector<LayerGroup>& groups() const noexcept { return groups_; }

  void gen();
  void quantize();
  void calibrate();
  void solve();
  void sweep();
  void simulate();
  void analyze();
  /// Runs any missing stage first, then the invariant suites. Writes
  /// verify.json and returns the report.
  VerifyReport verify();

  std::filesystem::path weight_path(const std::string& module_id) const;
  std::filesystem::path quant_stem(const std::string& module_id) const;
  std::filesystem::path calib_stem(std::size_t dim) const;
  std::filesystem::path factor_dir(const std::string& group_id) const;

  /// Loads persisted shared factors for a group. Throws IoError.
  SharedFactors load_factors(const LayerGroup& g) const;

 private:
  const ModuleSpec& spec(const std::string& module_id) const;
  std::size_t in_dim(const LayerGroup& g) const;
  Matrix true_covariance(std::size_t dim) const;
  Matrix calibrated(std::size_t dim) const;
  StackedError group_error(const LayerGroup& g) const;
  WeightMap group_weights(const LayerGroup& g) const;
  void record(const std::string& command, std::vector<std::string> files);
  void require(const std::filesystem::path& p, const char* stage) const;

  PipelineConfig cfg_;
  std::vector<ModuleSpec> modules_;
  std::vector<LayerGroup> groups_;
};

/// Command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace glowq::pipeline

#endif  // GLOWQ_PIPELINE_PIPELINE_HPP_
