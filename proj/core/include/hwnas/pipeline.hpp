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

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "hwnas/arch_space.hpp"
#include "hwnas/device_harness.hpp"
#include "hwnas/kernel_energy.hpp"
#include "hwnas/naswot.hpp"
#include "hwnas/pareto.hpp"
#include "hwnas/transfer.hpp"

namespace hwnas {

/// Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Measurement or oracle failure; maps to exit code 4.
class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExitStatus : int { kOk = 0, kConfigError = 2, kBudgetExhausted = 3, kHarnessFailure = 4 };

inline constexpr int kConfigSchemaVersion = 1;

enum class SpaceKind : std::uint8_t { kBase, kExpanded };

struct SpaceSettings {
  SpaceKind kind = SpaceKind::kBase;
  ExpansionGrid grid = ExpansionGrid::full();
  std::size_t pool_size = 0;  // 0: every valid architecture (base space only)
  std::uint64_t enumeration_limit = 200'000;
  std::size_t estimate_samples = 20'000;
};

struct PredictorSettings {
  enum class Source : std::uint8_t { kTrain, kZoo };
  Source source = Source::kTrain;
  std::vector<std::filesystem::path> zoo_paths;     // resolved against the config file
  std::vector<std::string> zoo_train_devices;       // trained on the fly
  std::size_t train_samples = 1000;
  TrainConfig train;
};

struct SelectionSpec {
  std::string name;
  Eigen::VectorXd wd;  // energy, accuracy
};

struct SearchSettings {
  SearchParams params;
  std::vector<SelectionSpec> selections;
  double reprofile_threshold = 0.2;
  int retrain_epochs = 60;
  int strata = 4;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SpaceSettings space;
  TensorShape input = kDefaultInput;
  std::vector<VirtualDevice> devices;
  std::string target_device;
  PredictorSettings predictor;
  int calibration_budget = 100;
  SearchSettings search;
  NaswotConfig naswot;
  std::filesystem::path output_dir;

  const VirtualDevice& device(const std::string& id) const;
  const VirtualDevice& target() const { return device(target_device); }
};

/// Throws ConfigError with the offending key.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical form with defaults filled in; stored in ledgers. The output
/// directory is left out so relocated reruns log identical bytes.
nlohmann::json config_to_json(const RunConfig& config);

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

struct LedgerRecord {
  std::int64_t timestamp = 0;  // logical sequence number
  std::string stage;
  std::optional<std::string> arch_id;
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<std::string> files;
};

std::string to_line(const LedgerRecord& record);
/// Throws std::invalid_argument on malformed lines.
LedgerRecord parse_ledger_line(std::string_view line);

/// Append-only writer; the file is truncated when opened.
class RunLedger {
 public:
  explicit RunLedger(const std::filesystem::path& path);
  const LedgerRecord& append(std::string stage, std::optional<std::string> arch_id = std::nullopt,
                             nlohmann::json metrics = nlohmann::json::object(),
                             std::vector<std::string> files = {});
  const std::vector<LedgerRecord>& records() const { return records_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<LedgerRecord> records_;
};

struct LedgerContents {
  std::vector<LedgerRecord> records;
  std::vector<std::string> errors;  // "line N: ..."
};

LedgerContents read_ledger(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SpaceSummary {
  std::uint64_t total = 0;  // before validity filtering
  std::uint64_t valid = 0;
  bool valid_is_estimate = false;
  std::filesystem::path listing;  // empty when not enumerated
};

SpaceSummary cmd_space(const RunConfig& config);

struct CalibrationOutcome {
  PredictorModel model;
  std::vector<EnergySample> samples;
  std::vector<KlEntry> kl_table;
  std::string base_device;  // empty when trained from scratch
  EvalMetrics base_metrics;
  EvalMetrics adapted_metrics;
};

/// Writes predictor.json and predictor_samples.csv under the output dir.
CalibrationOutcome cmd_calibrate(const RunConfig& config);

struct SelectionResult {
  std::string name;
  Eigen::VectorXd wd;
  std::string arch_id;
  double energy_mj = 0.0;
  double accuracy = 0.0;
};

struct SearchOutcome {
  SearchState state;
  std::vector<SelectionResult> selections;
  ExitStatus status = ExitStatus::kOk;
  int reprofiled_models = 0;
  PredictorModel predictor;
};

/// Full loop. Calibrates first unless predictor files already exist.
SearchOutcome cmd_search(const RunConfig& config);

/// Rebuilds the search state recorded in a search ledger.
SearchState replay_search(std::span<const LedgerRecord> records);

struct MeasureOutcome {
  std::vector<MeasurementResult> results;
  std::filesystem::path table;
};

/// Measures the first `limit` architectures of a listing (0: all) on the
/// target device; optionally writes each trace and event file.
MeasureOutcome cmd_measure(const RunConfig& config, const std::filesystem::path& listing,
                           std::size_t limit, bool write_traces);

struct ReportOutcome {
  std::size_t records = 0;
  std::vector<std::string> errors;
  std::vector<std::filesystem::path> point_files;
  std::filesystem::path summary;
};

ReportOutcome cmd_report(const std::filesystem::path& ledger, const std::filesystem::path& out_dir);

}  // namespace hwnas
