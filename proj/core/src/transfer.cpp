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

#include "hwnas/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "hwnas/seed.hpp"
#include "mlp_training.hpp"

namespace hwnas {

void PredictorZoo::add(PredictorModel model) {
  for (const auto& e : entries_) {
    if (e.device_id == model.device_id && e.backend == model.backend) {
      throw std::invalid_argument(fmt::format("duplicate zoo entry ({}, {})", model.device_id,
                                              to_string(model.backend)));
    }
    if (e.feature_layout != model.feature_layout || e.input_dim() != model.input_dim()) {
      throw std::invalid_argument("zoo entries must share one feature layout");
    }
  }
  entries_.push_back(std::move(model));
}

CalibrationPlan select_calibration_set(std::span<const KernelConfig> pool, int budget,
                                       std::uint64_t seed) {
  if (budget < 8) throw std::invalid_argument("calibration budget must be >= 8");
  if (static_cast<std::size_t>(budget) > pool.size()) {
    throw std::invalid_argument(
        fmt::format("calibration budget {} exceeds pool size {}", budget, pool.size()));
  }
  Rng rng(mix_seed(seed, "calibration"));

  std::vector<std::vector<std::size_t>> by_size(kKernelSizes.size());
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!is_conv_family(pool[i].pattern)) {
      others.push_back(i);
      continue;
    }
    const auto it = std::find(kKernelSizes.begin(), kKernelSizes.end(), pool[i].kernel_size);
    if (it == kKernelSizes.end()) throw std::invalid_argument("pool holds an invalid kernel size");
    by_size[static_cast<std::size_t>(it - kKernelSizes.begin())].push_back(i);
  }
  for (std::size_t k = 0; k < by_size.size(); ++k) {
    if (by_size[k].empty()) {
      throw std::invalid_argument(fmt::format(
          "calibration pool has no conv-family kernel with size {}", kKernelSizes[k]));
    }
    std::shuffle(by_size[k].begin(), by_size[k].end(), rng);
  }
  std::shuffle(others.begin(), others.end(), rng);

  const int conv_floor = static_cast<int>(std::ceil(kConvFamilyShare * budget - 1e-9));
  const int other_n = std::min(static_cast<int>(others.size()), budget - conv_floor);
  const int conv_n = budget - other_n;

  std::size_t conv_available = 0;
  for (const auto& b : by_size) conv_available += b.size();
  if (static_cast<std::size_t>(conv_n) > conv_available) {
    throw std::invalid_argument("calibration pool lacks conv-family kernels for its share");
  }

  // Even deal across kernel sizes; shortfalls move to sizes with spare.
  const auto sizes = static_cast<int>(by_size.size());
  std::vector<int> quota(by_size.size());
  for (int k = 0; k < sizes; ++k) quota[k] = conv_n / sizes + (k < conv_n % sizes ? 1 : 0);
  int deficit = 0;
  for (int k = 0; k < sizes; ++k) {
    const int have = static_cast<int>(by_size[k].size());
    if (quota[k] > have) {
      deficit += quota[k] - have;
      quota[k] = have;
    }
  }
  while (deficit > 0) {
    for (int k = 0; k < sizes && deficit > 0; ++k) {
      if (quota[k] < static_cast<int>(by_size[k].size())) {
        ++quota[k];
        --deficit;
      }
    }
  }

  CalibrationPlan plan;
  plan.budget = budget;
  for (int k = 0; k < sizes; ++k) {
    for (int i = 0; i < quota[k]; ++i) plan.configs.push_back(pool[by_size[k][i]]);
  }
  for (int i = 0; i < other_n; ++i) plan.configs.push_back(pool[others[i]]);
  for (const auto& c : plan.configs) plan.priority_weights[c.pattern] += 1.0 / budget;
  return plan;
}

double kl_divergence(std::span<const double> p_values, std::span<const double> q_values, int bins) {
  if (p_values.size() < 2 || q_values.size() < 2) {
    throw std::invalid_argument("kl_divergence needs >= 2 values per list");
  }
  if (bins < 2) throw std::invalid_argument("kl_divergence needs >= 2 bins");
  double lo = p_values[0], hi = p_values[0];
  for (auto v : {p_values, q_values}) {
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!(hi > lo)) return 0.0;

  auto histogram = [&](std::span<const double> values) {
    std::vector<double> h(static_cast<std::size_t>(bins), kKlSmoothing);
    for (double x : values) {
      auto b = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
      h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1.0;
    }
    double total = 0.0;
    for (double c : h) total += c;
    for (double& c : h) c /= total;
    return h;
  };
  const auto p = histogram(p_values);
  const auto q = histogram(q_values);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return std::max(0.0, kl);
}

const PredictorModel& select_base_predictor(const PredictorZoo& zoo,
                                            std::span<const EnergySample> measured,
                                            std::vector<KlEntry>* table) {
  if (zoo.empty()) throw std::invalid_argument("predictor zoo is empty");
  if (measured.size() < kMinTrainingSamples) {
    throw std::invalid_argument("base selection needs >= 30 measured samples");
  }
  const Backend backend = measured.front().backend;
  std::set<KernelPattern> patterns;
  std::vector<double> truth;
  for (const auto& s : measured) {
    if (s.backend != backend) throw std::invalid_argument("measured samples mix backends");
    patterns.insert(s.config.pattern);
    truth.push_back(std::log1p(std::max(0.0, s.energy_mj)));
  }

  // Histograms are built over log1p(mJ): raw energies are heavy-tailed and
  // equal-width bins would lump almost every kernel into the first bin.
  const PredictorModel* best = nullptr;
  double best_kl = 0.0;
  if (table) table->clear();
  for (const auto& entry : zoo.entries()) {
    if (entry.backend != backend) continue;
    if (!std::all_of(patterns.begin(), patterns.end(),
                     [&](KernelPattern p) { return entry.covers(p); })) {
      continue;
    }
    std::vector<double> predicted;
    predicted.reserve(measured.size());
    for (const auto& s : measured) predicted.push_back(std::log1p(std::max(0.0, predict_kernel(entry, s.config))));
    const double kl = kl_divergence(truth, predicted, kKlBins);
    if (table) table->push_back({entry.device_id, entry.backend, kl});
    if (!best || kl < best_kl || (kl == best_kl && entry.device_id < best->device_id)) {
      best = &entry;
      best_kl = kl;
    }
  }
  if (!best) {
    throw std::invalid_argument(
        fmt::format("no zoo entry for backend {} covering the measured patterns", to_string(backend)));
  }
  return *best;
}

PredictorModel continue_training(const PredictorModel& base, std::span<const EnergySample> samples,
                                 const FineTuneConfig& config) {
  if (samples.empty()) throw std::invalid_argument("fine-tuning needs samples");
  const auto expected_layout = base.pooled ? kPooledFeatureLayout : kFeatureLayout;
  if (base.feature_layout != expected_layout ||
      base.feature_mean.size() != static_cast<std::size_t>(base.input_dim())) {
    throw std::invalid_argument("feature-layout mismatch between base predictor and this build");
  }
  for (const auto& s : samples) {
    if (!base.covers(s.config.pattern)) {
      throw std::invalid_argument(fmt::format("feature-layout mismatch: base predictor does not cover {}",
                                              to_string(s.config.pattern)));
    }
    if (s.backend != base.backend) throw std::invalid_argument("fine-tuning samples use another backend");
    if (s.device_id != samples.front().device_id) {
      throw std::invalid_argument("fine-tuning samples mix devices");
    }
  }

  PredictorModel model = base;
  model.device_id = samples.front().device_id;

  // Pool the base statistics with the new samples' and rewrite the first
  // layer so the network computes the same function under the new scaling.
  const std::size_t dim = model.feature_mean.size();
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  for (const auto& s : samples) {
    const auto f = detail::unnormalized_features(s.config, model.pooled);
    for (std::size_t j = 0; j < dim; ++j) {
      sum[j] += f[j];
      sq[j] += f[j] * f[j];
    }
  }
  const double n0 = static_cast<double>(std::max<std::int64_t>(1, base.training_meta.sample_count));
  const double n1 = static_cast<double>(samples.size());
  std::vector<double> mean(dim), stddev(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const double m0 = base.feature_mean[j];
    const double s0 = base.feature_std[j];
    const double m = (n0 * m0 + sum[j]) / (n0 + n1);
    const double second = (n0 * (s0 * s0 + m0 * m0) + sq[j]) / (n0 + n1);
    const double sd = std::sqrt(std::max(0.0, second - m * m));
    mean[j] = m;
    stddev[j] = sd > 1e-12 ? sd : 1.0;
  }
  auto& first = model.layers.front();
  for (int r = 0; r < first.out; ++r) {
    double shift = 0.0;
    for (int c = 0; c < first.in; ++c) {
      auto& w = first.weights[static_cast<std::size_t>(r) * first.in + c];
      shift += w * (mean[c] - base.feature_mean[c]) / base.feature_std[c];
      w *= stddev[c] / base.feature_std[c];
    }
    first.bias[r] += shift;
  }
  model.feature_mean = std::move(mean);
  model.feature_std = std::move(stddev);

  const detail::Dataset data = detail::make_dataset(model, samples);
  detail::TrainerOptions opt;
  opt.seed = config.seed;
  opt.max_epochs = config.max_epochs;
  opt.learning_rate = config.learning_rate;
  opt.batch_size = config.batch_size;
  opt.patience = config.patience;
  opt.frozen_layers = samples.size() < config.freeze_below ? 1 : 0;
  opt.selection = detail::Selection::kTrainingRmse;
  const int epochs = detail::run_training(model, data, nullptr, opt, nullptr);

  model.training_meta = {config.seed, epochs,
                         base.training_meta.sample_count + static_cast<std::int64_t>(samples.size())};
  return model;
}

PredictorModel fine_tune(const PredictorModel& base, std::span<const EnergySample> samples,
                         const FineTuneConfig& config) {
  if (samples.size() < kMinTrainingSamples || samples.size() > kMaxFineTuneSamples) {
    throw std::invalid_argument("fine-tuning takes between 30 and 1000 samples");
  }
  return continue_training(base, samples, config);
}

}  // namespace hwnas
