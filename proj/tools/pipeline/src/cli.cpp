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

#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "glowq/errors.hpp"
#include "glowq/pipeline/pipeline.hpp"

namespace glowq::pipeline {

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  std::optional<std::string> whiten;
  std::optional<std::string> metric;
};

PipelineConfig resolve(const Flags& f) {
  PipelineConfig cfg = load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.output_dir = *f.out;
  if (f.mode) cfg.solve.mode = parse_solve_mode(*f.mode);
  if (f.whiten) {
    if (*f.whiten != "on" && *f.whiten != "off") throw ValidationError("--whiten expects on or off");
    cfg.solve.whiten = *f.whiten == "on";
  }
  if (f.metric) {
    if (*f.metric == "all") {
      cfg.sweep.metrics = all_metrics();
    } else {
      cfg.sweep.metrics = {parse_metric(*f.metric)};
      cfg.simulate.selective_metric = cfg.sweep.metrics.front();
    }
  }
  cfg.validate();
  return cfg;
}

int print_report(const VerifyReport& report) {
  for (const auto& i : report.invariants) {
    std::cout << (i.passed ? "PASS " : "FAIL ") << i.name << " [" << i.scope << "] value=" << i.value
              << " limit=" << i.limit;
    if (!i.detail.empty()) std::cout << " (" << i.detail << ")";
    std::cout << "\n";
  }
  return static_cast<int>(report.passed() ? ExitCode::ok : ExitCode::invariant);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"glowq: group-shared low-rank correction of quantization error"};
  app.require_subcommand(1);
  Flags flags;
  const char* commands[] = {"gen", "quantize", "calibrate", "solve", "sweep", "simulate", "analyze", "verify"};
  for (const char* name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", flags.config, "Pipeline config (JSON)")->required();
    sub->add_option("--seed", flags.seed, "Overrides the config seed");
    sub->add_option("--out", flags.out, "Run directory");
    sub->add_option("--mode", flags.mode, "Solver: exact or rsvd");
    sub->add_option("--whiten", flags.whiten, "Covariance weighting: on or off");
    sub->add_option("--metric", flags.metric, "ec, ner, fro, cos, order or all");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::validation);
  }
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    Pipeline p(resolve(flags));
    if (cmd == "gen") p.gen();
    if (cmd == "quantize") p.quantize();
    if (cmd == "calibrate") p.calibrate();
    if (cmd == "solve") p.solve();
    if (cmd == "sweep") p.sweep();
    if (cmd == "simulate") p.simulate();
    if (cmd == "analyze") p.analyze();
    if (cmd == "verify") return print_report(p.verify());
    return static_cast<int>(ExitCode::ok);
  } catch (const ValidationError& e) {
    std::cerr << "glowq " << cmd << ": " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  } catch (const IoError& e) {
    std::cerr << "glowq " << cmd << ": " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  } catch (const NumericalError& e) {
    std::cerr << "glowq " << cmd << ": numerical failure: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numerical);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "glowq " << cmd << ": " << e.what() << "\n";
    return static_cast<int>(ExitCode::validation);
  }
}

}  // namespace glowq::pipeline
