// Copyright 2026 The hwnas Authors
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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hwnas/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed_override;
  std::string out;
};

hwnas::RunConfig load(const GlobalOptions& g) {
  if (g.config.empty()) throw hwnas::ConfigError("--config is required for this command");
  std::ifstream in(g.config);
  if (!in) throw hwnas::ConfigError("cannot open config " + g.config);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw hwnas::ConfigError(fmt::format("{}: {}", g.config, e.what()));
  }
  if (!doc.is_object()) throw hwnas::ConfigError("config must be a JSON object");
  if (g.seed_override) doc["seed"] = *g.seed_override;
  if (!g.out.empty()) doc["output_dir"] = fs::absolute(g.out).string();
  return hwnas::parse_config(doc, fs::path(g.config).parent_path());
}

int status_code(hwnas::ExitStatus s) { return static_cast<int>(s); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hardware-aware architecture search on simulated devices"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed-override", g.seed_override, "Replace the config seed");
  app.add_option("--out", g.out, "Replace the config output directory");

  auto* space = app.add_subcommand("space", "Enumerate and validate the search space");
  auto* calibrate = app.add_subcommand("calibrate", "Build the target-device energy predictor");
  auto* search = app.add_subcommand("search", "Run the Pareto search loop");

  auto* measure = app.add_subcommand("measure", "Measure listed architectures on the target device");
  std::string listing;
  std::size_t limit = 0;
  bool traces = false;
  measure->add_option("--listing", listing, "Architecture listing (default: <out>/architectures.jsonl)");
  measure->add_option("--limit", limit, "Measure only the first N architectures");
  measure->add_flag("--traces", traces, "Write power trace and event files");

  auto* report = app.add_subcommand("report", "Summarize a search ledger");
  std::string ledger;
  std::string report_dir;
  report->add_option("--ledger", ledger, "Ledger file (default: <out>/search.ledger.jsonl)");
  report->add_option("--report-dir", report_dir, "Where to write report files (default: <ledger dir>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : status_code(hwnas::ExitStatus::kConfigError);
  }

  try {
    if (space->parsed()) {
      const auto s = hwnas::cmd_space(load(g));
      fmt::print("space: {} total, {} valid{}\nlisting: {}\n", s.total, s.valid,
                 s.valid_is_estimate ? " (estimated)" : "", s.listing.string());
    } else if (calibrate->parsed()) {
      const auto c = hwnas::cmd_calibrate(load(g));
      if (!c.base_device.empty()) {
        for (const auto& e : c.kl_table) fmt::print("KL {} ({}): {:.6f}\n", e.device_id, hwnas::to_string(e.backend), e.kl);
        fmt::print("base predictor: {}\n", c.base_device);
        fmt::print("before adaptation: ACC@20 {:.3f}, RMSE {:.4f} mJ\n", c.base_metrics.acc_at_20, c.base_metrics.rmse_mj);
      }
      fmt::print("predictor: ACC@20 {:.3f}, RMSE {:.4f} mJ on {} samples\n", c.adapted_metrics.acc_at_20,
                 c.adapted_metrics.rmse_mj, c.samples.size());
    } else if (search->parsed()) {
      const auto o = hwnas::cmd_search(load(g));
      fmt::print("iterations: {}, evaluated: {}, front: {}, hypervolume: {:.6f}\n", o.state.iteration,
                 o.state.measured.size(), o.state.front.size(), o.state.hypervolume.back());
      for (const auto& s : o.selections) {
        fmt::print("{}: {} accuracy {:.4f}, {:.4f} mJ\n", s.name, s.arch_id, s.accuracy, s.energy_mj);
      }
      if (o.status == hwnas::ExitStatus::kBudgetExhausted) {
        fmt::print(stderr, "budget exhausted: no front entry meets the constraints\n");
      }
      return status_code(o.status);
    } else if (measure->parsed()) {
      const auto cfg = load(g);
      const fs::path path = listing.empty() ? cfg.output_dir / "architectures.jsonl" : fs::path(listing);
      const auto o = hwnas::cmd_measure(cfg, path, limit, traces);
      fmt::print("measured {} architectures -> {}\n", o.results.size(), o.table.string());
    } else if (report->parsed()) {
      fs::path ledger_path = ledger;
      if (ledger_path.empty()) ledger_path = load(g).output_dir / "search.ledger.jsonl";
      const fs::path dir = report_dir.empty() ? ledger_path.parent_path() / "report" : fs::path(report_dir);
      const auto o = hwnas::cmd_report(ledger_path, dir);
      for (const auto& e : o.errors) fmt::print(stderr, "{}: {}\n", ledger_path.string(), e);
      fmt::print("{} records, {} point files, summary: {}\n", o.records, o.point_files.size(), o.summary.string());
    }
  } catch (const hwnas::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return status_code(hwnas::ExitStatus::kConfigError);
  } catch (const hwnas::HarnessError& e) {
    fmt::print(stderr, "harness failure: {}\n", e.what());
    return status_code(hwnas::ExitStatus::kHarnessFailure);
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "invalid input: {}\n", e.what());
    return status_code(hwnas::ExitStatus::kConfigError);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
