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

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hwnas/arch_space.hpp"
#include "hwnas/kernel_config.hpp"

namespace hwnas {

enum class Backend : std::uint8_t { kCpu, kGpu };

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view text);

struct EnergySample {
  KernelConfig config;
  double energy_mj = 0.0;
  Backend backend = Backend::kCpu;
  std::string device_id;
};

// ---------------------------------------------------------------------------
// Config generation
// ---------------------------------------------------------------------------

struct ConfigRanges {
  std::vector<KernelPattern> patterns{KernelPattern::kConvBnRelu};
  std::vector<int> heights{8, 14, 16, 28, 32, 56, 64};
  std::vector<int> widths;  // empty: square inputs (W = H)
  std::vector<int> in_channels{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 16, 32, 64, 128, 256};
  std::vector<int> out_channels{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 16, 32, 64, 128, 256};
  std::vector<int> kernel_sizes{1, 3, 5, 7};
  std::vector<int> strides{1, 2};
};

/// Stratified over kernel size: sizes are dealt round-robin so each value
/// receives floor(n / |sizes|) configs or one more. Depthwise and pooling
/// configs keep Cout = Cin.
std::vector<KernelConfig> generate_configs(std::uint64_t seed, std::size_t n,
                                           const ConfigRanges& ranges = {});

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

inline constexpr int kRawFeatureCount = 8;
using RawFeatures = std::array<double, kRawFeatureCount>;

/// [H, W, Cin, Cout, KS, stride, MACs, output_bytes].
RawFeatures featurize(const KernelConfig& config);

/// Model input layout. Raw features go through log1p before z-scoring; a
/// pooled model appends a one-hot over the three patterns.
inline constexpr std::string_view kFeatureLayout =
    "log1p[H,W,Cin,Cout,KS,stride,MACs,output_bytes]";
inline constexpr std::string_view kPooledFeatureLayout =
    "log1p[H,W,Cin,Cout,KS,stride,MACs,output_bytes]+onehot[pattern]";

// ---------------------------------------------------------------------------
// Predictor
// ---------------------------------------------------------------------------

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> weights;  // row-major, out x in
  std::vector<double> bias;     // out

  bool operator==(const DenseLayer&) const = default;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  std::int64_t sample_count = 0;

  bool operator==(const TrainingMeta&) const = default;
};

/// Feed-forward ReLU regressor on log1p(energy_mJ).
struct PredictorModel {
  Backend backend = Backend::kCpu;
  std::string device_id;
  bool pooled = false;
  std::vector<KernelPattern> patterns;  // patterns the model was trained for
  std::string feature_layout;
  std::vector<int> layer_dims;  // input, hidden..., 1
  std::vector<DenseLayer> layers;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  std::string target_transform = "log1p";
  TrainingMeta training_meta;

  bool covers(KernelPattern pattern) const;
  int input_dim() const { return layer_dims.empty() ? 0 : layer_dims.front(); }
  bool operator==(const PredictorModel&) const = default;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  int max_epochs = 400;
  double learning_rate = 3e-3;
  int batch_size = 32;
  std::vector<int> hidden_dims{64, 64};
  /// Early stop after this many epochs without validation improvement.
  int patience = 20;
  double validation_fraction = 0.1;
  bool pooled = false;
};

struct TrainLog {
  std::vector<double> train_loss;       // per-epoch mean, log1p space
  std::vector<double> validation_loss;  // per epoch
  int best_epoch = 0;
  bool fell_back_to_mean = false;
};

inline constexpr std::size_t kMinTrainingSamples = 30;

/// Throws std::invalid_argument("insufficient training data") below 30
/// samples and on mixed backends/devices (or mixed patterns unless pooled).
PredictorModel train_predictor(std::span<const EnergySample> samples, const TrainConfig& config,
                               TrainLog* log = nullptr);

/// Model input vector (log1p, z-scored, optional pattern one-hot).
std::vector<double> model_input(const PredictorModel& model, const KernelConfig& config);
/// Raw network output in log1p space.
double forward(const PredictorModel& model, std::span<const double> input);

/// Energy in mJ, clamped at zero.
double predict_kernel(const PredictorModel& model, const KernelConfig& config);
std::vector<double> predict_kernels(const PredictorModel& model,
                                    std::span<const KernelConfig> configs);

/// Sum of predict_kernel over extract_kernels(arch, input).
double predict_model_energy(const PredictorModel& model, const Architecture& arch,
                            const TensorShape& input = kDefaultInput);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct EvalMetrics {
  double acc_at_20 = 0.0;
  double acc_at_10 = 0.0;
  double acc_at_5 = 0.0;
  double rmse_mj = 0.0;
};

using IdEnergy = std::pair<std::string, double>;

/// |top-k(predicted) ∩ top-k(truth)| / k over the k lowest energies; ties by
/// id ascending.
double acc_at_k(std::span<const IdEnergy> predicted, std::span<const IdEnergy> truth, int k);
double rmse(std::span<const double> predicted, std::span<const double> truth);

/// Metrics of `model` against the samples' recorded energies.
EvalMetrics evaluate(const PredictorModel& model, std::span<const EnergySample> samples);
/// Same for arbitrary predicted/truth vectors; ids are sample indices.
EvalMetrics evaluate(std::span<const double> predicted, std::span<const double> truth);

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline constexpr std::string_view kSampleCsvHeader =
    "pattern,H,W,Cin,Cout,KS,stride,backend,device_id,energy_mJ";

void write_samples_csv(std::ostream& out, std::span<const EnergySample> samples);
std::vector<EnergySample> read_samples_csv(std::istream& in);
void save_samples(const std::string& path, std::span<const EnergySample> samples);
std::vector<EnergySample> load_samples(const std::string& path);

/// Dataset format without the energy column.
void write_configs_csv(std::ostream& out, std::span<const KernelConfig> configs, Backend backend,
                       std::string_view device_id);

std::string model_to_json(const PredictorModel& model);
PredictorModel model_from_json(std::string_view text);
void save_model(const std::string& path, const PredictorModel& model);
PredictorModel load_model(const std::string& path);

}  // namespace hwnas
