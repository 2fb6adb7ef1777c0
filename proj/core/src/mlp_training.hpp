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

// Shared gradient-training loop for the kernel energy regressor. Used by
// train_predictor and by the transfer module's fine-tuning.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hwnas/kernel_energy.hpp"

namespace hwnas::detail {

struct Dataset {
  Eigen::MatrixXd x;       // n x d, model inputs
  Eigen::VectorXd y;       // n, log1p(energy)
  Eigen::VectorXd energy;  // n, mJ
  Eigen::Index size() const { return y.size(); }
};

Dataset make_dataset(const PredictorModel& model, std::span<const EnergySample> samples);
Dataset subset(const Dataset& data, std::span<const Eigen::Index> rows);

/// Per-column log1p feature vectors (before z-scoring).
std::vector<double> unnormalized_features(const KernelConfig& config, bool pooled);

enum class Selection {
  kValidationLoss,  // best held-out log-space MSE, early stop on patience
  kTrainingRmse,    // best training-set RMSE in mJ, starting state included
};

struct TrainerOptions {
  std::uint64_t seed = 1;
  int max_epochs = 400;
  double learning_rate = 3e-3;
  int batch_size = 32;
  int patience = 20;
  int frozen_layers = 0;  // leading layers excluded from updates
  Selection selection = Selection::kValidationLoss;
};

/// Trains `model` in place and leaves it at the selected checkpoint. Returns
/// the number of epochs run.
int run_training(PredictorModel& model, const Dataset& train, const Dataset* validation,
                 const TrainerOptions& options, TrainLog* log);

Eigen::VectorXd predict_log(const PredictorModel& model, const Eigen::MatrixXd& x);
double rmse_mj(const PredictorModel& model, const Dataset& data);

}  // namespace hwnas::detail
