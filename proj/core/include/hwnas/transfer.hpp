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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hwnas/kernel_energy.hpp"

namespace hwnas {

/// Base predictors keyed by (device_id, backend).
class PredictorZoo {
 public:
  /// Throws on duplicate keys or on a feature layout differing from the
  /// entries already present.
  void add(PredictorModel model);

  const std::vector<PredictorModel>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<PredictorModel> entries_;
};

struct CalibrationPlan {
  std::vector<KernelConfig> configs;
  int budget = 0;
  std::map<KernelPattern, double> priority_weights;  // share of the plan per pattern
};

/// Minimum share of conv-family kernels in a calibration plan.
inline constexpr double kConvFamilyShare = 0.7;

/// Picks `budget` kernels: at least 70% conv-family, with the conv share
/// dealt evenly across kernel sizes.
CalibrationPlan select_calibration_set(std::span<const KernelConfig> pool, int budget,
                                       std::uint64_t seed);

inline constexpr int kKlBins = 32;
inline constexpr double kKlSmoothing = 1e-9;

/// KL(p || q) in nats between equal-width histograms over the union range.
double kl_divergence(std::span<const double> p_values, std::span<const double> q_values,
                     int bins = kKlBins);

struct KlEntry {
  std::string device_id;
  Backend backend = Backend::kCpu;
  double kl = 0.0;
};

/// Entry whose predictions on the measured configs are closest in
/// distribution to the measured energies. Ties go to the smaller device_id.
const PredictorModel& select_base_predictor(const PredictorZoo& zoo,
                                            std::span<const EnergySample> measured,
                                            std::vector<KlEntry>* table = nullptr);

struct FineTuneConfig {
  std::uint64_t seed = 1;
  int max_epochs = 600;
  double learning_rate = 3e-3;
  int batch_size = 16;
  int patience = 100;
  /// Below this many samples the first hidden layer stays frozen.
  std::size_t freeze_below = 50;
};

inline constexpr std::size_t kMaxFineTuneSamples = 1000;

/// Continues training from `base` on target-device samples (30..1000). The
/// returned model never has a higher training-set RMSE than `base`.
PredictorModel fine_tune(const PredictorModel& base, std::span<const EnergySample> samples,
                         const FineTuneConfig& config = {});

/// Same loop without the sample-count cap; used when re-profiled kernels are
/// folded back into a predictor.
PredictorModel continue_training(const PredictorModel& base, std::span<const EnergySample> samples,
                                 const FineTuneConfig& config = {});

}  // namespace hwnas
