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

#include "hwnas/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "hwnas/seed.hpp"

namespace hwnas {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

const VirtualDevice& RunConfig::device(const std::string& id) const {
  for (const auto& d : devices) {
    if (d.device_id == id) return d;
  }
  throw ConfigError("unknown device: " + id);
}

namespace {

template <typename T>
T read_or(const json& obj, const std::string& key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}.{}: {}", where, key, e.what()));
  }
}

const json& section(const json& doc, const std::string& key) {
  static const json kEmpty = json::object();
  if (!doc.contains(key)) return kEmpty;
  if (!doc.at(key).is_object()) throw ConfigError(key + " must be an object");
  return doc.at(key);
}

Eigen::VectorXd read_weights(const json& obj, const std::string& where, Eigen::Vector2d fallback) {
  if (obj.is_null()) return fallback;
  if (!obj.is_object()) throw ConfigError(where + " must be {\"energy\": w, \"accuracy\": w}");
  return Eigen::Vector2d(read_or<double>(obj, "energy", fallback[0], where),
                         read_or<double>(obj, "accuracy", fallback[1], where));
}

json weights_json(const Eigen::VectorXd& w) { return {{"energy", w[0]}, {"accuracy", w[1]}}; }

VirtualDevice parse_device(const json& d, std::size_t index) {
  const std::string where = fmt::format("devices[{}]", index);
  if (!d.is_object()) throw ConfigError(where + " must be an object");
  VirtualDevice v;
  if (!d.contains("device_id")) throw ConfigError(where + ".device_id is required");
  v.device_id = read_or<std::string>(d, "device_id", "", where);
  try {
    v.backend = parse_backend(read_or<std::string>(d, "backend", "CPU", where));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ".backend: " + e.what());
  }
  v.coeffs.mj_per_mac = read_or(d, "mj_per_mac", v.coeffs.mj_per_mac, where);
  v.coeffs.mj_per_byte = read_or(d, "mj_per_byte", v.coeffs.mj_per_byte, where);
  v.coeffs.static_mj = read_or(d, "static_mj", v.coeffs.static_mj, where);
  v.coeffs.scale = read_or(d, "scale", v.coeffs.scale, where);
  v.noise_sigma = read_or(d, "noise_sigma", v.noise_sigma, where);
  const json& clock = d.contains("clock") ? d.at("clock") : json::object();
  v.clock.offset_us = read_or<std::int64_t>(clock, "offset_us", 0, where + ".clock");
  v.clock.drift_ppm = read_or<double>(clock, "drift_ppm", 0.0, where + ".clock");
  v.sample_rate_hz = read_or(d, "sample_rate_hz", v.sample_rate_hz, where);
  v.seed = read_or<std::uint64_t>(d, "seed", v.seed, where);
  v.accuracy_noise = read_or(d, "accuracy_noise", v.accuracy_noise, where);
  try {
    v.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return v;
}

json device_json(const VirtualDevice& v) {
  return {{"device_id", v.device_id},
          {"backend", std::string(to_string(v.backend))},
          {"mj_per_mac", v.coeffs.mj_per_mac},
          {"mj_per_byte", v.coeffs.mj_per_byte},
          {"static_mj", v.coeffs.static_mj},
          {"scale", v.coeffs.scale},
          {"noise_sigma", v.noise_sigma},
          {"clock", {{"offset_us", v.clock.offset_us}, {"drift_ppm", v.clock.drift_ppm}}},
          {"sample_rate_hz", v.sample_rate_hz},
          {"seed", v.seed},
          {"accuracy_noise", v.accuracy_noise}};
}

}  // namespace

RunConfig parse_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  const int version = read_or<int>(doc, "schema_version", -1, "config");
  if (version != kConfigSchemaVersion) {
    throw ConfigError(fmt::format("schema_version must be {} (got {})", kConfigSchemaVersion, version));
  }
  if (!doc.contains("seed")) throw ConfigError("seed is required");

  RunConfig c;
  c.seed = read_or<std::uint64_t>(doc, "seed", 0, "config");

  const json& space = section(doc, "space");
  const std::string kind = read_or<std::string>(space, "kind", "base", "space");
  if (kind == "base") {
    c.space.kind = SpaceKind::kBase;
  } else if (kind == "expanded") {
    c.space.kind = SpaceKind::kExpanded;
  } else {
    throw ConfigError("space.kind must be base or expanded");
  }
  const json& grid = section(space, "grid");
  c.space.grid.kernel_sizes = read_or(grid, "kernel_sizes", c.space.grid.kernel_sizes, "space.grid");
  c.space.grid.out_channels = read_or(grid, "out_channels", c.space.grid.out_channels, "space.grid");
  c.space.grid.strides = read_or(grid, "strides", c.space.grid.strides, "space.grid");
  try {
    c.space.grid.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("space.grid: ") + e.what());
  }
  c.space.pool_size = read_or(space, "pool_size", c.space.pool_size, "space");
  c.space.enumeration_limit = read_or(space, "enumeration_limit", c.space.enumeration_limit, "space");
  c.space.estimate_samples = read_or(space, "estimate_samples", c.space.estimate_samples, "space");

  const json& input = section(doc, "input");
  c.input.height = read_or(input, "height", c.input.height, "input");
  c.input.width = read_or(input, "width", c.input.width, "input");
  c.input.channels = read_or(input, "channels", c.input.channels, "input");
  if (c.input.height < 1 || c.input.width < 1 || c.input.channels < 1) {
    throw ConfigError("input dimensions must be positive");
  }

  if (!doc.contains("devices") || !doc.at("devices").is_array() || doc.at("devices").empty()) {
    throw ConfigError("devices must be a non-empty array");
  }
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc.at("devices").size(); ++i) {
    c.devices.push_back(parse_device(doc.at("devices")[i], i));
    if (!ids.insert(c.devices.back().device_id).second) {
      throw ConfigError("duplicate device_id " + c.devices.back().device_id);
    }
  }
  c.target_device = read_or<std::string>(doc, "target_device", c.devices.front().device_id, "config");
  (void)c.device(c.target_device);

  const json& pred = section(doc, "predictor");
  const std::string source = read_or<std::string>(pred, "source", "train", "predictor");
  if (source == "train") {
    c.predictor.source = PredictorSettings::Source::kTrain;
  } else if (source == "zoo") {
    c.predictor.source = PredictorSettings::Source::kZoo;
  } else {
    throw ConfigError("predictor.source must be train or zoo");
  }
  for (const auto& p : read_or<std::vector<std::string>>(pred, "zoo_paths", {}, "predictor")) {
    fs::path path = fs::path(p).is_absolute() ? fs::path(p) : base_dir / p;
    if (!fs::exists(path)) throw ConfigError("predictor.zoo_paths: file not found: " + path.string());
    c.predictor.zoo_paths.push_back(path.lexically_normal());
  }
  c.predictor.zoo_train_devices =
      read_or<std::vector<std::string>>(pred, "zoo_train_devices", {}, "predictor");
  for (const auto& id : c.predictor.zoo_train_devices) (void)c.device(id);
  if (c.predictor.source == PredictorSettings::Source::kZoo && c.predictor.zoo_paths.empty() &&
      c.predictor.zoo_train_devices.empty()) {
    throw ConfigError("predictor.source zoo needs zoo_paths or zoo_train_devices");
  }
  c.predictor.train_samples = read_or(pred, "train_samples", c.predictor.train_samples, "predictor");
  c.predictor.train.max_epochs = read_or(pred, "max_epochs", c.predictor.train.max_epochs, "predictor");
  c.predictor.train.pooled = true;
  if (c.predictor.train_samples < kMinTrainingSamples) {
    throw ConfigError("predictor.train_samples must be >= 30");
  }

  const json& cal = section(doc, "calibration");
  c.calibration_budget = read_or(cal, "budget", c.calibration_budget, "calibration");
  if (c.calibration_budget < static_cast<int>(kMinTrainingSamples) ||
      c.calibration_budget > static_cast<int>(kMaxFineTuneSamples)) {
    throw ConfigError("calibration.budget must be within [30, 1000]");
  }

  const json& search = section(doc, "search");
  SearchParams& sp = c.search.params;
  sp.n_init = read_or(search, "n_init", sp.n_init, "search");
  sp.n_batch = read_or(search, "n_batch", sp.n_batch, "search");
  sp.max_iterations = read_or(search, "max_iterations", sp.max_iterations, "search");
  sp.neighbors = read_or(search, "neighbors", sp.neighbors, "search");
  sp.selection_neighbors = read_or(search, "selection_neighbors", sp.selection_neighbors, "search");
  sp.ridge = read_or(search, "ridge", sp.ridge, "search");
  sp.ws = read_weights(search.value("ws", json()), "search.ws", Eigen::Vector2d(3.0, 1.0));
  const json& cons = section(search, "constraints");
  if (cons.contains("max_energy_mJ")) sp.constraints.max_energy_mj = read_or<double>(cons, "max_energy_mJ", 0, "search.constraints");
  if (cons.contains("min_accuracy")) sp.constraints.min_accuracy = read_or<double>(cons, "min_accuracy", 0, "search.constraints");
  try {
    sp.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("search: ") + e.what());
  }
  if (search.contains("selections")) {
    if (!search.at("selections").is_array()) throw ConfigError("search.selections must be an array");
    for (const auto& s : search.at("selections")) {
      SelectionSpec spec;
      spec.name = read_or<std::string>(s, "name", "", "search.selections");
      spec.wd = read_weights(s.value("wd", json()), "search.selections.wd", Eigen::Vector2d(1.0, 1.0));
      if (spec.name.empty()) throw ConfigError("search.selections entries need a name");
      if ((spec.wd.array() < 0.0).any()) throw ConfigError("search.selections.wd must be >= 0");
      c.search.selections.push_back(std::move(spec));
    }
  } else {
    c.search.selections = {{"energy-prioritized", Eigen::Vector2d(3.0, 1.0)},
                           {"accuracy-prioritized", Eigen::Vector2d(1.0, 3.0)}};
  }
  c.search.reprofile_threshold = read_or(search, "reprofile_threshold", c.search.reprofile_threshold, "search");
  c.search.retrain_epochs = read_or(search, "retrain_epochs", c.search.retrain_epochs, "search");
  c.search.strata = read_or(search, "strata", c.search.strata, "search");
  if (!(c.search.reprofile_threshold > 0.0)) throw ConfigError("search.reprofile_threshold must be > 0");
  if (c.search.strata < 1) throw ConfigError("search.strata must be >= 1");

  const json& nas = section(doc, "naswot");
  c.naswot.batch = read_or(nas, "batch", c.naswot.batch, "naswot");
  c.naswot.per_activation = read_or(nas, "per_activation", c.naswot.per_activation, "naswot");
  if (c.naswot.batch < 2) throw ConfigError("naswot.batch must be >= 2");
  c.naswot.weight_seed = mix_seed(c.seed, "naswot-weights");
  c.naswot.probe_seed = mix_seed(c.seed, "naswot-probe");

  const std::string out = read_or<std::string>(doc, "output_dir", "hwnas-out", "config");
  c.output_dir = fs::path(out).is_absolute() ? fs::path(out) : base_dir / out;
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_config(doc, path.parent_path());
}

json config_to_json(const RunConfig& c) {
  json devices = json::array();
  for (const auto& d : c.devices) devices.push_back(device_json(d));
  json zoo_paths = json::array();
  for (const auto& p : c.predictor.zoo_paths) zoo_paths.push_back(p.string());
  json selections = json::array();
  for (const auto& s : c.search.selections) selections.push_back({{"name", s.name}, {"wd", weights_json(s.wd)}});
  json constraints = json::object();
  if (c.search.params.constraints.max_energy_mj) constraints["max_energy_mJ"] = *c.search.params.constraints.max_energy_mj;
  if (c.search.params.constraints.min_accuracy) constraints["min_accuracy"] = *c.search.params.constraints.min_accuracy;
  const auto& sp = c.search.params;
  return {{"schema_version", kConfigSchemaVersion},
          {"seed", c.seed},
          {"space",
           {{"kind", c.space.kind == SpaceKind::kBase ? "base" : "expanded"},
            {"grid",
             {{"kernel_sizes", c.space.grid.kernel_sizes},
              {"out_channels", c.space.grid.out_channels},
              {"strides", c.space.grid.strides}}},
            {"pool_size", c.space.pool_size},
            {"enumeration_limit", c.space.enumeration_limit},
            {"estimate_samples", c.space.estimate_samples}}},
          {"input", {{"height", c.input.height}, {"width", c.input.width}, {"channels", c.input.channels}}},
          {"devices", devices},
          {"target_device", c.target_device},
          {"predictor",
           {{"source", c.predictor.source == PredictorSettings::Source::kTrain ? "train" : "zoo"},
            {"zoo_paths", zoo_paths},
            {"zoo_train_devices", c.predictor.zoo_train_devices},
            {"train_samples", c.predictor.train_samples},
            {"max_epochs", c.predictor.train.max_epochs}}},
          {"calibration", {{"budget", c.calibration_budget}}},
          {"search",
           {{"n_init", sp.n_init},
            {"n_batch", sp.n_batch},
            {"max_iterations", sp.max_iterations},
            {"neighbors", sp.neighbors},
            {"selection_neighbors", sp.selection_neighbors},
            {"ridge", sp.ridge},
            {"ws", weights_json(sp.ws)},
            {"constraints", constraints},
            {"selections", selections},
            {"reprofile_threshold", c.search.reprofile_threshold},
            {"retrain_epochs", c.search.retrain_epochs},
            {"strata", c.search.strata}}},
          {"naswot", {{"batch", c.naswot.batch}, {"per_activation", c.naswot.per_activation}}}};
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

std::string to_line(const LedgerRecord& r) {
  json j = {{"timestamp", r.timestamp}, {"stage", r.stage}};
  if (r.arch_id) j["arch_id"] = *r.arch_id;
  j["metrics"] = r.metrics;
  j["files"] = r.files;
  return j.dump();
}

LedgerRecord parse_ledger_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("timestamp") || !j.contains("stage")) {
    throw std::invalid_argument("record needs timestamp and stage");
  }
  try {
    LedgerRecord r;
    r.timestamp = j.at("timestamp").get<std::int64_t>();
    r.stage = j.at("stage").get<std::string>();
    if (j.contains("arch_id")) r.arch_id = j.at("arch_id").get<std::string>();
    if (j.contains("metrics")) r.metrics = j.at("metrics");
    if (j.contains("files")) r.files = j.at("files").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad field: ") + e.what());
  }
}

RunLedger::RunLedger(const fs::path& path) : path_(path), out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open ledger " + path.string());
}

const LedgerRecord& RunLedger::append(std::string stage, std::optional<std::string> arch_id,
                                      json metrics, std::vector<std::string> files) {
  LedgerRecord r{static_cast<std::int64_t>(records_.size()), std::move(stage), std::move(arch_id),
                 std::move(metrics), std::move(files)};
  out_ << to_line(r) << '\n';
  out_.flush();
  records_.push_back(std::move(r));
  return records_.back();
}

LedgerContents read_ledger(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ledger " + path.string());
  LedgerContents out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.records.push_back(parse_ledger_line(line));
    } catch (const std::invalid_argument& e) {
      out.errors.push_back(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kPredictorFile = "predictor.json";
constexpr std::string_view kPredictorSamplesFile = "predictor_samples.csv";

ConfigRanges pipeline_ranges() {
  ConfigRanges r;
  r.patterns = {KernelPattern::kConvBnRelu, KernelPattern::kAvgPool};
  return r;
}

json metrics_json(const EvalMetrics& m) {
  return {{"acc_at_20", m.acc_at_20}, {"acc_at_10", m.acc_at_10}, {"acc_at_5", m.acc_at_5}, {"rmse_mJ", m.rmse_mj}};
}

PredictorModel train_on_device(const RunConfig& config, const VirtualDevice& device, std::size_t n,
                               std::string_view tag, std::vector<EnergySample>* samples_out) {
  const auto configs = generate_configs(mix_seed(mix_seed(config.seed, tag), device.device_id), n, pipeline_ranges());
  auto samples = measure_kernels(device, configs, mix_seed(mix_seed(config.seed, "kernel-measure"), device.device_id));
  TrainConfig tc = config.predictor.train;
  tc.seed = mix_seed(mix_seed(config.seed, "train"), device.device_id);
  PredictorModel model = train_predictor(samples, tc);
  if (samples_out) *samples_out = std::move(samples);
  return model;
}

fs::path ensure_output(const RunConfig& config) {
  fs::create_directories(config.output_dir);
  return config.output_dir;
}

CalibrationOutcome calibrate_impl(const RunConfig& config, RunLedger& ledger) {
  const fs::path out = ensure_output(config);
  const VirtualDevice& target = config.target();
  CalibrationOutcome oc;

  if (config.predictor.source == PredictorSettings::Source::kTrain) {
    oc.model = train_on_device(config, target, config.predictor.train_samples, "train-configs", &oc.samples);
    oc.adapted_metrics = evaluate(oc.model, oc.samples);
  } else {
    PredictorZoo zoo;
    for (const auto& p : config.predictor.zoo_paths) {
      try {
        zoo.add(load_model(p.string()));
      } catch (const std::exception& e) {
        throw ConfigError(fmt::format("zoo entry {}: {}", p.string(), e.what()));
      }
    }
    for (const auto& id : config.predictor.zoo_train_devices) {
      zoo.add(train_on_device(config, config.device(id), config.predictor.train_samples, "zoo-configs", nullptr));
    }
    const auto pool = generate_configs(mix_seed(config.seed, "calibration-pool"),
                                       static_cast<std::size_t>(config.calibration_budget) * 10, pipeline_ranges());
    const CalibrationPlan plan = select_calibration_set(pool, config.calibration_budget, mix_seed(config.seed, "calibration"));
    oc.samples = measure_kernels(target, plan.configs, mix_seed(config.seed, "calibration-measure"));
    const PredictorModel& base = select_base_predictor(zoo, oc.samples, &oc.kl_table);
    oc.base_device = base.device_id;
    oc.base_metrics = evaluate(base, oc.samples);
    FineTuneConfig ft;
    ft.seed = mix_seed(config.seed, "fine-tune");
    oc.model = fine_tune(base, oc.samples, ft);
    oc.adapted_metrics = evaluate(oc.model, oc.samples);
  }

  save_model((out / kPredictorFile).string(), oc.model);
  save_samples((out / kPredictorSamplesFile).string(), oc.samples);

  json kl = json::array();
  for (const auto& e : oc.kl_table) {
    kl.push_back({{"device_id", e.device_id}, {"backend", std::string(to_string(e.backend))}, {"kl", e.kl}});
  }
  json metrics = {{"source", oc.base_device.empty() ? "train" : "zoo"},
                  {"samples", oc.samples.size()},
                  {"kl_table", kl},
                  {"adapted", metrics_json(oc.adapted_metrics)}};
  if (!oc.base_device.empty()) {
    metrics["base_device"] = oc.base_device;
    metrics["base"] = metrics_json(oc.base_metrics);
  }
  ledger.append("calibration", std::nullopt, std::move(metrics),
                {std::string(kPredictorFile), std::string(kPredictorSamplesFile)});
  return oc;
}

/// Non-conv base ops plus every grid conv: the per-edge alphabet of the
/// expanded space.
std::vector<OpKind> expanded_ops(const ExpansionGrid& grid) {
  std::vector<OpKind> ops{Zeroize{}, Skip{}, AvgPool3x3{}};
  for (int k : grid.kernel_sizes) {
    for (int ch : grid.out_channels) {
      for (int s : grid.strides) ops.emplace_back(Conv{k, ch, s});
    }
  }
  return ops;
}

std::uint64_t checked_pow(std::uint64_t base, int exp) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (r > UINT64_MAX / base) throw ConfigError("expanded space size overflows 64 bits");
    r *= base;
  }
  return r;
}

Architecture uniform_expanded(const std::vector<OpKind>& ops, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, ops.size() - 1);
  CellTopology cell;
  for (auto& op : cell.edge_ops) op = ops[pick(rng)];
  return Architecture(cell);
}

/// Draws op classes uniformly and gives every conv into a node that node's
/// channel count, so most draws pass the channel checks.
Architecture structured_expanded(const ExpansionGrid& grid, Rng& rng) {
  auto choose = [&](const std::vector<int>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::array<int, kCellNodes> node_channels{};
  for (auto& c : node_channels) c = choose(grid.out_channels);
  CellTopology cell;
  for (int e = 0; e < kCellEdges; ++e) {
    switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
      case 0: cell.edge_ops[e] = Zeroize{}; break;
      case 1: cell.edge_ops[e] = Skip{}; break;
      case 2: cell.edge_ops[e] = AvgPool3x3{}; break;
      default:
        cell.edge_ops[e] = Conv{choose(grid.kernel_sizes), node_channels[kCellEdgeOrder[e].to], choose(grid.strides)};
    }
  }
  return Architecture(cell);
}

std::vector<Architecture> build_pool(const RunConfig& config) {
  std::vector<Architecture> pool;
  if (config.space.kind == SpaceKind::kBase) {
    for_each_base_architecture([&](const Architecture& a) {
      if (validate(a, config.input).valid) pool.push_back(a);
    });
    if (config.space.pool_size > 0 && config.space.pool_size < pool.size()) {
      Rng rng(mix_seed(config.seed, "pool"));
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(config.space.pool_size), pool.end());
      std::sort(pool.begin(), pool.end(), [](const Architecture& a, const Architecture& b) { return a.id() < b.id(); });
    }
    return pool;
  }
  if (config.space.pool_size == 0) throw ConfigError("space.pool_size is required for the expanded space");
  Rng rng(mix_seed(config.seed, "pool"));
  std::set<std::string> seen;
  const std::size_t attempts = config.space.pool_size * 200;
  for (std::size_t i = 0; i < attempts && pool.size() < config.space.pool_size; ++i) {
    Architecture a = structured_expanded(config.space.grid, rng);
    if (seen.contains(a.id()) || !validate(a, config.input).valid) continue;
    seen.insert(a.id());
    pool.push_back(std::move(a));
  }
  if (pool.size() < config.space.pool_size) {
    throw ConfigError(fmt::format("could only draw {} valid expanded architectures", pool.size()));
  }
  return pool;
}

using KernelKey = std::tuple<int, int, int, int, int, int, int>;

KernelKey key_of(const KernelConfig& k) {
  return {static_cast<int>(k.pattern), k.height, k.width, k.in_channels, k.out_channels, k.kernel_size, k.stride};
}

/// Pool architectures with their kernels deduplicated, so re-prediction
/// after a retrain costs one pass over distinct kernels.
struct PoolPredictions {
  std::vector<Architecture> archs;
  std::map<std::string, std::size_t> index;
  std::vector<KernelConfig> kernels;
  std::vector<std::vector<std::uint32_t>> arch_kernels;
  std::vector<double> energy;

  PoolPredictions(std::vector<Architecture> pool, const TensorShape& input) : archs(std::move(pool)) {
    std::map<KernelKey, std::uint32_t> seen;
    arch_kernels.reserve(archs.size());
    for (std::size_t i = 0; i < archs.size(); ++i) {
      index[archs[i].id()] = i;
      std::vector<std::uint32_t> ks;
      for (const auto& k : extract_kernels(archs[i], input)) {
        auto [it, inserted] = seen.try_emplace(key_of(k), static_cast<std::uint32_t>(kernels.size()));
        if (inserted) kernels.push_back(k);
        ks.push_back(it->second);
      }
      arch_kernels.push_back(std::move(ks));
    }
  }

  void predict(const PredictorModel& model) {
    const auto per_kernel = predict_kernels(model, kernels);
    energy.assign(archs.size(), 0.0);
    for (std::size_t i = 0; i < archs.size(); ++i) {
      for (auto k : arch_kernels[i]) energy[i] += per_kernel[k];
    }
  }

  const Architecture& arch(const std::string& id) const { return archs[index.at(id)]; }
  double predicted(const std::string& id) const { return energy[index.at(id)]; }
};

Candidate candidate_of(const Architecture& a) {
  const ArchEmbedding e = embed(a);
  return {a.id(), Eigen::Map<const Eigen::VectorXd>(e.data(), kEmbeddingDim)};
}

double relative_error(double predicted, double measured) {
  return std::abs(predicted - measured) / std::max(measured, 1e-12);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

// ---------------------------------------------------------------------------
// space
// ---------------------------------------------------------------------------

SpaceSummary cmd_space(const RunConfig& config) {
  const fs::path out = ensure_output(config);
  RunLedger ledger(out / "space.ledger.jsonl");
  ledger.append("config", std::nullopt, {{"config", config_to_json(config)}});

  SpaceSummary s;
  std::ostringstream listing;
  std::uint64_t written = 0;
  if (config.space.kind == SpaceKind::kBase) {
    for_each_base_architecture([&](const Architecture& a) {
      ++s.total;
      if (!validate(a, config.input).valid) return;
      ++s.valid;
      listing << to_record(a) << '\n';
    });
    written = s.valid;
  } else {
    const auto ops = expanded_ops(config.space.grid);
    s.total = checked_pow(ops.size(), kCellEdges);
    if (s.total <= config.space.enumeration_limit) {
      std::array<std::size_t, kCellEdges> digit{};
      for (std::uint64_t n = 0; n < s.total; ++n) {
        CellTopology cell;
        for (int e = 0; e < kCellEdges; ++e) cell.edge_ops[e] = ops[digit[e]];
        const Architecture a(cell);
        if (validate(a, config.input).valid) {
          ++s.valid;
          listing << to_record(a) << '\n';
        }
        for (int e = kCellEdges - 1; e >= 0; --e) {
          if (++digit[e] < ops.size()) break;
          digit[e] = 0;
        }
      }
      written = s.valid;
    } else {
      Rng rng(mix_seed(config.seed, "space-estimate"));
      std::uint64_t hits = 0;
      for (std::size_t i = 0; i < config.space.estimate_samples; ++i) {
        const Architecture a = uniform_expanded(ops, rng);
        if (validate(a, config.input).valid) {
          ++hits;
          listing << to_record(a) << '\n';
          ++written;
        }
      }
      s.valid = static_cast<std::uint64_t>(std::llround(
          static_cast<double>(s.total) * static_cast<double>(hits) /
          static_cast<double>(std::max<std::size_t>(1, config.space.estimate_samples))));
      s.valid_is_estimate = true;
    }
  }

  s.listing = out / (s.valid_is_estimate ? "architectures_sample.jsonl" : "architectures.jsonl");
  write_text(s.listing, listing.str());
  const json summary = {{"kind", config.space.kind == SpaceKind::kBase ? "base" : "expanded"},
                        {"total", s.total},
                        {"valid", s.valid},
                        {"invalid", s.total - std::min(s.total, s.valid)},
                        {"valid_is_estimate", s.valid_is_estimate},
                        {"listed", written}};
  write_text(out / "space_summary.json", summary.dump(2) + "\n");
  ledger.append("space", std::nullopt, summary, {s.listing.filename().string(), "space_summary.json"});
  return s;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

CalibrationOutcome cmd_calibrate(const RunConfig& config) {
  const fs::path out = ensure_output(config);
  RunLedger ledger(out / "calibrate.ledger.jsonl");
  ledger.append("config", std::nullopt, {{"config", config_to_json(config)}});
  return calibrate_impl(config, ledger);
}

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

namespace {

json evaluation_metrics(int iteration, const Architecture& arch, const Observation& predicted,
                        const MeasurementResult& m) {
  return {{"iteration", iteration},
          {"arch", to_record(arch)},
          {"predicted_energy_mJ", predicted.energy_mj},
          {"naswot", std::isfinite(predicted.score) ? json(predicted.score) : json(nullptr)},
          {"energy_mJ", m.energy_mj},
          {"accuracy", m.accuracy},
          {"avg_power_mW", m.avg_power_mw},
          {"sample_count", m.sample_count}};
}

}  // namespace

SearchOutcome cmd_search(const RunConfig& config) {
  const fs::path out = ensure_output(config);
  RunLedger ledger(out / "search.ledger.jsonl");
  ledger.append("config", std::nullopt, {{"config", config_to_json(config)}});
  const VirtualDevice& target = config.target();

  SearchOutcome outcome;
  std::vector<EnergySample> training;
  if (fs::exists(out / kPredictorFile) && fs::exists(out / kPredictorSamplesFile)) {
    outcome.predictor = load_model((out / kPredictorFile).string());
    training = load_samples((out / kPredictorSamplesFile).string());
    ledger.append("predictor", std::nullopt, {{"source", "file"}, {"samples", training.size()}},
                  {std::string(kPredictorFile), std::string(kPredictorSamplesFile)});
  } else {
    CalibrationOutcome cal = calibrate_impl(config, ledger);
    outcome.predictor = std::move(cal.model);
    training = std::move(cal.samples);
  }

  PoolPredictions pool(build_pool(config), config.input);
  pool.predict(outcome.predictor);
  std::vector<Candidate> candidates;
  candidates.reserve(pool.archs.size());
  for (const auto& a : pool.archs) candidates.push_back(candidate_of(a));
  ledger.append("pool", std::nullopt,
                {{"size", pool.archs.size()}, {"distinct_kernels", pool.kernels.size()}});
  if (pool.archs.size() < config.search.params.n_init) {
    throw ConfigError(fmt::format("pool holds {} architectures, fewer than n_init", pool.archs.size()));
  }

  // Oracles. `batch_log` collects what the ledger needs per evaluated model.
  std::map<std::string, double> naswot_cache;
  struct Evaluated {
    std::string id;
    Observation predicted;
    MeasurementResult measured;
  };
  std::vector<Evaluated> batch_log;
  std::map<std::string, Observation> last_prediction;

  const Oracle predict = [&](const std::vector<std::string>& ids) {
    std::vector<Observation> obs;
    for (const auto& id : ids) {
      auto it = naswot_cache.find(id);
      if (it == naswot_cache.end()) {
        it = naswot_cache.emplace(id, naswot_proxy(pool.arch(id), config.naswot).n_s).first;
      }
      obs.push_back({pool.predicted(id), it->second});
      last_prediction[id] = obs.back();
    }
    return obs;
  };
  const Oracle measure_oracle = [&](const std::vector<std::string>& ids) {
    std::vector<Observation> obs;
    for (const auto& id : ids) {
      MeasurementResult m;
      try {
        m = measure(target, pool.arch(id), mix_seed(config.seed, id), config.input);
      } catch (const std::exception& e) {
        throw HarnessError(fmt::format("measuring {}: {}", id, e.what()));
      }
      batch_log.push_back({id, last_prediction.at(id), m});
      obs.push_back({m.energy_mj, m.accuracy});
    }
    return obs;
  };

  std::ostringstream fronts;
  fronts << kFrontCsvHeader << '\n';

  auto after_batch = [&](const SearchState& state, int iteration) {
    std::vector<std::string> triggered;
    for (const auto& ev : batch_log) {
      ledger.append("evaluate", ev.id, evaluation_metrics(iteration, pool.arch(ev.id), ev.predicted, ev.measured));
      if (relative_error(ev.predicted.energy_mj, ev.measured.energy_mj) > config.search.reprofile_threshold) {
        triggered.push_back(ev.id);
      }
    }
    // Re-profile: measure the model's kernels, keep the badly predicted ones
    // (or all of them when the error is spread thin), retrain, re-predict.
    if (!triggered.empty()) {
      std::vector<EnergySample> added;
      for (const auto& id : triggered) {
        const auto kernels = extract_kernels(pool.arch(id), config.input);
        const auto samples = measure_kernels(target, kernels, mix_seed(mix_seed(config.seed, "reprofile"), id));
        std::vector<EnergySample> keep;
        for (const auto& s : samples) {
          if (relative_error(predict_kernel(outcome.predictor, s.config), s.energy_mj) > config.search.reprofile_threshold) {
            keep.push_back(s);
          }
        }
        if (keep.empty()) keep = samples;
        const auto& ev = *std::find_if(batch_log.begin(), batch_log.end(), [&](const Evaluated& e) { return e.id == id; });
        ledger.append("reprofile", id,
                      {{"iteration", iteration},
                       {"relative_error", relative_error(ev.predicted.energy_mj, ev.measured.energy_mj)},
                       {"kernels_measured", samples.size()},
                       {"kernels_added", keep.size()}});
        added.insert(added.end(), keep.begin(), keep.end());
        ++outcome.reprofiled_models;
      }
      training.insert(training.end(), added.begin(), added.end());
      const double before = evaluate(outcome.predictor, training).rmse_mj;
      FineTuneConfig ft;
      ft.seed = mix_seed(mix_seed(config.seed, "retrain"), static_cast<std::uint64_t>(iteration));
      ft.max_epochs = config.search.retrain_epochs;
      outcome.predictor = continue_training(outcome.predictor, training, ft);
      pool.predict(outcome.predictor);
      ledger.append("retrain", std::nullopt,
                    {{"iteration", iteration},
                     {"training_samples", training.size()},
                     {"rmse_before_mJ", before},
                     {"rmse_after_mJ", evaluate(outcome.predictor, training).rmse_mj}});
    }
    batch_log.clear();

    write_front_csv(fronts, iteration, state.front, false);
    if (iteration == 0) write_front_csv(fronts, 0, pareto_front(state.predicted), false);
    json ids = json::array();
    for (const auto& e : state.front) ids.push_back(e.arch_id);
    ledger.append("front", std::nullopt,
                  {{"iteration", iteration},
                   {"hypervolume", state.hypervolume.back()},
                   {"front_size", state.front.size()},
                   {"front", ids}},
                  {"fronts.csv"});
  };

  // Initial sample, stratified by predicted energy.
  EnergyStrata strata{config.search.strata, [&](const Architecture& a) { return pool.predicted(a.id()); }};
  const auto initial_archs = sample_space(pool.archs, mix_seed(config.seed, "initial"),
                                          config.search.params.n_init, strata, config.input);
  std::vector<Candidate> initial;
  for (const auto& a : initial_archs) initial.push_back(candidate_of(a));

  SearchState state = init_search(config.search.params, initial, predict, measure_oracle);
  after_batch(state, 0);
  while (!state.finished()) {
    state = search_iteration(state, candidates, predict, measure_oracle);
    after_batch(state, state.iteration);
  }

  json selections = json::array();
  for (const auto& spec : config.search.selections) {
    SelectionResult r{spec.name, spec.wd, select_best(state, spec.wd), 0.0, 0.0};
    const auto& e = *std::find_if(state.front.begin(), state.front.end(),
                                  [&](const FrontEntry& f) { return f.arch_id == r.arch_id; });
    r.energy_mj = e.energy_mj;
    r.accuracy = e.score_raw;
    json rec = {{"name", r.name}, {"wd", weights_json(r.wd)}, {"energy_mJ", r.energy_mj},
                {"accuracy", r.accuracy}, {"iterations", state.iteration}};
    ledger.append("select", r.arch_id, rec);
    rec["arch_id"] = r.arch_id;
    selections.push_back(rec);
    outcome.selections.push_back(std::move(r));
  }

  const bool exhausted = !state.params.constraints.empty() && !state.constraints_met();
  outcome.status = exhausted ? ExitStatus::kBudgetExhausted : ExitStatus::kOk;
  write_text(out / "fronts.csv", fronts.str());
  write_text(out / "best.json", json{{"selections", selections},
                                     {"status", exhausted ? "budget_exhausted" : "ok"}}.dump(2) + "\n");
  save_model((out / "predictor_final.json").string(), outcome.predictor);
  ledger.append("done", std::nullopt,
                {{"status", exhausted ? "budget_exhausted" : "ok"},
                 {"iterations", state.iteration},
                 {"evaluated", state.measured.size()},
                 {"reprofiled_models", outcome.reprofiled_models}},
                {"fronts.csv", "best.json", "predictor_final.json"});
  outcome.state = std::move(state);
  return outcome;
}

SearchState replay_search(std::span<const LedgerRecord> records) {
  std::optional<SearchParams> params;
  struct Batch {
    std::vector<Candidate> candidates;
    std::vector<Observation> predicted, measured;
  };
  std::map<int, Batch> batches;
  for (const auto& r : records) {
    if (r.stage == "config") {
      const json& c = r.metrics.at("config");
      SearchParams p;
      const json& s = c.at("search");
      p.n_init = s.at("n_init").get<std::size_t>();
      p.n_batch = s.at("n_batch").get<std::size_t>();
      p.max_iterations = s.at("max_iterations").get<int>();
      p.neighbors = s.at("neighbors").get<std::size_t>();
      p.selection_neighbors = s.at("selection_neighbors").get<std::size_t>();
      p.ridge = s.at("ridge").get<double>();
      p.ws = Eigen::Vector2d(s.at("ws").at("energy").get<double>(), s.at("ws").at("accuracy").get<double>());
      const json& cons = s.at("constraints");
      if (cons.contains("max_energy_mJ")) p.constraints.max_energy_mj = cons.at("max_energy_mJ").get<double>();
      if (cons.contains("min_accuracy")) p.constraints.min_accuracy = cons.at("min_accuracy").get<double>();
      params = p;
    } else if (r.stage == "evaluate") {
      const json& m = r.metrics;
      Batch& b = batches[m.at("iteration").get<int>()];
      b.candidates.push_back(candidate_of(parse_record(m.at("arch").get<std::string>())));
      const double naswot = m.at("naswot").is_null() ? -std::numeric_limits<double>::infinity()
                                                     : m.at("naswot").get<double>();
      b.predicted.push_back({m.at("predicted_energy_mJ").get<double>(), naswot});
      b.measured.push_back({m.at("energy_mJ").get<double>(), m.at("accuracy").get<double>()});
    }
  }
  if (!params) throw std::invalid_argument("ledger has no config record");
  if (!batches.contains(0)) throw std::invalid_argument("ledger has no initial evaluations");
  const Batch& init = batches.at(0);
  SearchState state = init_from_observations(*params, init.candidates, init.predicted, init.measured);
  for (const auto& [iteration, b] : batches) {
    if (iteration == 0) continue;
    if (iteration != state.iteration + 1) throw std::invalid_argument("ledger skips an iteration");
    state = apply_batch(state, b.candidates, b.predicted, b.measured);
  }
  return state;
}

// ---------------------------------------------------------------------------
// measure
// ---------------------------------------------------------------------------

MeasureOutcome cmd_measure(const RunConfig& config, const fs::path& listing, std::size_t limit,
                           bool write_traces) {
  std::ifstream in(listing);
  if (!in) throw ConfigError("cannot open architecture listing " + listing.string());
  std::vector<Architecture> archs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line) && (limit == 0 || archs.size() < limit)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      archs.push_back(parse_record(line));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("{} line {}: {}", listing.string(), line_no, e.what()));
    }
  }

  const fs::path out = ensure_output(config);
  RunLedger ledger(out / "measure.ledger.jsonl");
  ledger.append("config", std::nullopt, {{"config", config_to_json(config)}});
  if (write_traces) fs::create_directories(out / "traces");
  const VirtualDevice& target = config.target();

  MeasureOutcome oc;
  std::ostringstream table;
  table << "arch_id,T_s_us,T_e_us,avg_current_mA,avg_voltage_mV,avg_power_mW,energy_mJ,sample_count,accuracy\n";
  for (const auto& a : archs) {
    const std::uint64_t run_seed = mix_seed(config.seed, a.id());
    MeasurementResult m;
    try {
      m = measure(target, a, run_seed, config.input);
    } catch (const std::exception& e) {
      throw HarnessError(fmt::format("measuring {}: {}", a.id(), e.what()));
    }
    std::vector<std::string> files;
    if (write_traces) {
      const InferenceRun run = run_inference(target, a, run_seed, config.input);
      const std::string trace = "traces/" + a.id() + ".trace.csv";
      const std::string events = "traces/" + a.id() + ".events.csv";
      std::ofstream t(out / trace);
      write_trace_csv(t, run.trace);
      std::ofstream ev(out / events);
      write_events_csv(ev, run.events);
      files = {trace, events};
    }
    table << fmt::format("{},{},{},{},{},{},{},{},{}\n", a.id(), m.t_start_us, m.t_end_us, m.avg_current_ma,
                         m.avg_voltage_mv, m.avg_power_mw, m.energy_mj, m.sample_count, m.accuracy);
    ledger.append("measure", a.id(),
                  {{"energy_mJ", m.energy_mj}, {"accuracy", m.accuracy}, {"avg_power_mW", m.avg_power_mw},
                   {"sample_count", m.sample_count}},
                  std::move(files));
    oc.results.push_back(std::move(m));
  }
  oc.table = out / "measurements.csv";
  write_text(oc.table, table.str());
  return oc;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

ReportOutcome cmd_report(const fs::path& ledger_path, const fs::path& out_dir) {
  const LedgerContents contents = read_ledger(ledger_path);
  ReportOutcome oc;
  oc.records = contents.records.size();
  oc.errors = contents.errors;
  fs::create_directories(out_dir);

  std::map<int, std::ostringstream> points;
  std::ostringstream comparison;
  comparison << "method,weights,iterations,accuracy,mJ_per_inference\n";
  json selections = json::array();
  json summary = {{"records", oc.records}, {"corrupt_lines", oc.errors.size()}};
  std::size_t evaluated = 0;
  std::size_t reprofiled = 0;
  for (const auto& r : contents.records) {
    try {
      if (r.stage == "evaluate") {
        const int it = r.metrics.at("iteration").get<int>();
        auto& p = points[it];
        if (p.tellp() == 0) p << "arch_id,energy_mJ,accuracy\n";
        p << fmt::format("{},{},{}\n", r.arch_id.value_or(""), r.metrics.at("energy_mJ").get<double>(),
                         r.metrics.at("accuracy").get<double>());
        ++evaluated;
      } else if (r.stage == "reprofile") {
        ++reprofiled;
      } else if (r.stage == "front") {
        summary["final_hypervolume"] = r.metrics.at("hypervolume");
        summary["iterations"] = r.metrics.at("iteration");
      } else if (r.stage == "select") {
        const auto& wd = r.metrics.at("wd");
        comparison << fmt::format("pareto-search ({}),wd_energy={} wd_accuracy={},{},{},{}\n",
                                  r.metrics.at("name").get<std::string>(), wd.at("energy").get<double>(),
                                  wd.at("accuracy").get<double>(), r.metrics.at("iterations").get<int>(),
                                  r.metrics.at("accuracy").get<double>(), r.metrics.at("energy_mJ").get<double>());
        json s = r.metrics;
        s["arch_id"] = r.arch_id.value_or("");
        selections.push_back(s);
      } else if (r.stage == "done") {
        summary["status"] = r.metrics.at("status");
      }
    } catch (const json::exception& e) {
      oc.errors.push_back(fmt::format("record {} ({}): {}", r.timestamp, r.stage, e.what()));
    }
  }
  summary["evaluated"] = evaluated;
  summary["reprofiled_models"] = reprofiled;
  summary["selections"] = selections;
  summary["errors"] = oc.errors;

  for (auto& [it, text] : points) {
    const fs::path p = out_dir / fmt::format("points_iter_{:02}.csv", it);
    write_text(p, text.str());
    oc.point_files.push_back(p);
  }
  write_text(out_dir / "comparison.csv", comparison.str());
  oc.summary = out_dir / "summary.json";
  write_text(oc.summary, summary.dump(2) + "\n");
  return oc;
}

}  // namespace hwnas
