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

#include "hwnas/kernel_energy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hwnas/seed.hpp"
#include "mlp_training.hpp"

namespace hwnas {

std::string_view to_string(Backend backend) { return backend == Backend::kCpu ? "CPU" : "GPU"; }

Backend parse_backend(std::string_view text) {
  if (text == "CPU") return Backend::kCpu;
  if (text == "GPU") return Backend::kGpu;
  throw std::invalid_argument(fmt::format("unknown backend '{}'", text));
}

// ---------------------------------------------------------------------------

std::vector<KernelConfig> generate_configs(std::uint64_t seed, std::size_t n,
                                           const ConfigRanges& r) {
  if (n == 0) throw std::invalid_argument("generate_configs: n must be >= 1");
  if (r.patterns.empty() || r.heights.empty() || r.in_channels.empty() ||
      r.out_channels.empty() || r.kernel_sizes.empty() || r.strides.empty()) {
    throw std::invalid_argument("generate_configs: empty range");
  }
  Rng rng(mix_seed(seed, "generate_configs"));
  auto pick = [&rng](const std::vector<int>& values) {
    return values[std::uniform_int_distribution<std::size_t>(0, values.size() - 1)(rng)];
  };

  std::vector<int> sizes(n);
  for (std::size_t i = 0; i < n; ++i) sizes[i] = r.kernel_sizes[i % r.kernel_sizes.size()];
  std::shuffle(sizes.begin(), sizes.end(), rng);

  std::vector<KernelConfig> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    KernelConfig c;
    c.pattern = r.patterns[std::uniform_int_distribution<std::size_t>(0, r.patterns.size() - 1)(rng)];
    c.height = pick(r.heights);
    c.width = r.widths.empty() ? c.height : pick(r.widths);
    c.in_channels = pick(r.in_channels);
    c.out_channels = pick(r.out_channels);
    if (c.pattern != KernelPattern::kConvBnRelu) c.out_channels = c.in_channels;
    c.kernel_size = sizes[i];
    c.stride = pick(r.strides);
    check_valid(c);
    out.push_back(c);
  }
  return out;
}

RawFeatures featurize(const KernelConfig& c) {
  return {static_cast<double>(c.height),       static_cast<double>(c.width),
          static_cast<double>(c.in_channels),  static_cast<double>(c.out_channels),
          static_cast<double>(c.kernel_size),  static_cast<double>(c.stride),
          static_cast<double>(c.macs()),       static_cast<double>(c.output_bytes())};
}

bool PredictorModel::covers(KernelPattern pattern) const {
  return pooled || std::find(patterns.begin(), patterns.end(), pattern) != patterns.end();
}

namespace detail {

std::vector<double> unnormalized_features(const KernelConfig& config, bool pooled) {
  const auto raw = featurize(config);
  std::vector<double> v;
  v.reserve(kRawFeatureCount + (pooled ? kAllPatterns.size() : 0));
  for (double x : raw) v.push_back(std::log1p(x));
  if (pooled) {
    for (auto p : kAllPatterns) v.push_back(config.pattern == p ? 1.0 : 0.0);
  }
  return v;
}

}  // namespace detail

std::vector<double> model_input(const PredictorModel& model, const KernelConfig& config) {
  auto v = detail::unnormalized_features(config, model.pooled);
  if (v.size() != model.feature_mean.size() || v.size() != model.feature_std.size()) {
    throw std::invalid_argument("model feature stats do not match the feature layout");
  }
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - model.feature_mean[i]) / model.feature_std[i];
  return v;
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> weight_map(const DenseLayer& l) {
  return Eigen::Map<const RowMajor>(l.weights.data(), l.out, l.in);
}

}  // namespace

double forward(const PredictorModel& model, std::span<const double> input) {
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Eigen::VectorXd z = weight_map(layer) * a +
                        Eigen::Map<const Eigen::VectorXd>(layer.bias.data(), layer.out);
    if (l + 1 < model.layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a(0);
}

double predict_kernel(const PredictorModel& model, const KernelConfig& config) {
  if (!model.covers(config.pattern)) {
    throw std::invalid_argument(fmt::format("predictor for {} does not cover pattern {}",
                                            model.device_id, to_string(config.pattern)));
  }
  const auto input = model_input(model, config);
  const double out = std::expm1(forward(model, input));
  return std::isfinite(out) ? std::max(0.0, out) : std::numeric_limits<double>::max();
}

std::vector<double> predict_kernels(const PredictorModel& model,
                                    std::span<const KernelConfig> configs) {
  std::vector<double> out;
  out.reserve(configs.size());
  for (const auto& c : configs) out.push_back(predict_kernel(model, c));
  return out;
}

double predict_model_energy(const PredictorModel& model, const Architecture& arch,
                            const TensorShape& input) {
  double total = 0.0;
  for (const auto& k : extract_kernels(arch, input)) total += predict_kernel(model, k);
  return total;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

Dataset make_dataset(const PredictorModel& model, std::span<const EnergySample> samples) {
  Dataset d;
  const auto n = static_cast<Eigen::Index>(samples.size());
  d.x.resize(n, model.input_dim());
  d.y.resize(n);
  d.energy.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = model_input(model, samples[i].config);
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) d.x(i, j) = row[j];
    d.energy(i) = samples[i].energy_mj;
    d.y(i) = std::log1p(samples[i].energy_mj);
  }
  return d;
}

Dataset subset(const Dataset& data, std::span<const Eigen::Index> rows) {
  Dataset d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.x.resize(n, data.x.cols());
  d.y.resize(n);
  d.energy.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d.x.row(i) = data.x.row(rows[i]);
    d.y(i) = data.y(rows[i]);
    d.energy(i) = data.energy(rows[i]);
  }
  return d;
}

namespace {

struct Params {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

Params to_params(const PredictorModel& m) {
  Params p;
  for (const auto& l : m.layers) {
    p.w.emplace_back(weight_map(l));
    p.b.emplace_back(Eigen::Map<const Eigen::VectorXd>(l.bias.data(), l.out));
  }
  return p;
}

void store_params(const Params& p, PredictorModel& m) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& layer = m.layers[l];
    Eigen::Map<RowMajor>(layer.weights.data(), layer.out, layer.in) = p.w[l];
    Eigen::Map<Eigen::VectorXd>(layer.bias.data(), layer.out) = p.b[l];
  }
}

Eigen::VectorXd forward_batch(const Params& p, const Eigen::MatrixXd& x,
                              std::vector<Eigen::MatrixXd>* activations) {
  Eigen::MatrixXd a = x;
  if (activations) activations->assign(1, a);
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    Eigen::MatrixXd z = a * p.w[l].transpose();
    z.rowwise() += p.b[l].transpose();
    if (l + 1 < p.w.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
    if (activations) activations->push_back(a);
  }
  return a.col(0);
}

double mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& y) {
  return y.size() == 0 ? 0.0 : (pred - y).squaredNorm() / static_cast<double>(y.size());
}

double rmse_from_log(const Eigen::VectorXd& log_pred, const Eigen::VectorXd& energy) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < energy.size(); ++i) {
    const double p = std::max(0.0, std::expm1(log_pred(i)));
    s += (p - energy(i)) * (p - energy(i));
  }
  return std::sqrt(s / static_cast<double>(std::max<Eigen::Index>(1, energy.size())));
}

}  // namespace

Eigen::VectorXd predict_log(const PredictorModel& model, const Eigen::MatrixXd& x) {
  return forward_batch(to_params(model), x, nullptr);
}

double rmse_mj(const PredictorModel& model, const Dataset& data) {
  return rmse_from_log(predict_log(model, data.x), data.energy);
}

int run_training(PredictorModel& model, const Dataset& train, const Dataset* validation,
                 const TrainerOptions& opt, TrainLog* log) {
  Params p = to_params(model);
  const std::size_t layers = p.w.size();
  Params m1, m2;
  for (std::size_t l = 0; l < layers; ++l) {
    m1.w.push_back(Eigen::MatrixXd::Zero(p.w[l].rows(), p.w[l].cols()));
    m2.w.push_back(Eigen::MatrixXd::Zero(p.w[l].rows(), p.w[l].cols()));
    m1.b.push_back(Eigen::VectorXd::Zero(p.b[l].size()));
    m2.b.push_back(Eigen::VectorXd::Zero(p.b[l].size()));
  }
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  auto score = [&](const Params& params) {
    if (opt.selection == Selection::kValidationLoss) {
      const Dataset& d = validation && validation->size() > 0 ? *validation : train;
      return mse(forward_batch(params, d.x, nullptr), d.y);
    }
    return rmse_from_log(forward_batch(params, train.x, nullptr), train.energy);
  };

  Params best = p;
  double best_score = opt.selection == Selection::kTrainingRmse
                          ? score(p)
                          : std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_best = 0;
  int step = 0;

  Rng rng(mix_seed(opt.seed, "run_training"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(std::max(1, opt.batch_size));

  int epoch = 0;
  std::vector<Eigen::MatrixXd> acts;
  for (; epoch < opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto rows = std::span<const Eigen::Index>(order.data() + start, end - start);
      const Dataset mb = subset(train, rows);
      const Eigen::VectorXd pred = forward_batch(p, mb.x, &acts);
      const Eigen::VectorXd err = pred - mb.y;
      loss_sum += err.squaredNorm();

      // Backprop of mean squared error.
      Eigen::MatrixXd delta = (2.0 / static_cast<double>(rows.size())) * err;
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, step);
      const double c2 = 1.0 - std::pow(kBeta2, step);
      for (std::size_t li = layers; li-- > 0;) {
        const Eigen::MatrixXd grad_w = delta.transpose() * acts[li];
        const Eigen::VectorXd grad_b = delta.colwise().sum().transpose();
        if (li > 0) {
          delta = (delta * p.w[li]).cwiseProduct(
              (acts[li].array() > 0.0).cast<double>().matrix());
        }
        if (static_cast<int>(li) < opt.frozen_layers) continue;
        m1.w[li] = kBeta1 * m1.w[li] + (1 - kBeta1) * grad_w;
        m2.w[li] = kBeta2 * m2.w[li] + (1 - kBeta2) * grad_w.cwiseAbs2();
        m1.b[li] = kBeta1 * m1.b[li] + (1 - kBeta1) * grad_b;
        m2.b[li] = kBeta2 * m2.b[li] + (1 - kBeta2) * grad_b.cwiseAbs2();
        p.w[li].array() -= opt.learning_rate * (m1.w[li].array() / c1) /
                           ((m2.w[li].array() / c2).sqrt() + kEps);
        p.b[li].array() -= opt.learning_rate * (m1.b[li].array() / c1) /
                           ((m2.b[li].array() / c2).sqrt() + kEps);
      }
    }
    const double train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, order.size()));
    const double s = score(p);
    if (log) {
      log->train_loss.push_back(train_loss);
      log->validation_loss.push_back(opt.selection == Selection::kValidationLoss ? s : train_loss);
    }
    if (s < best_score) {
      best_score = s;
      best = p;
      best_epoch = epoch + 1;
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      ++epoch;
      break;
    }
  }
  store_params(best, model);
  if (log) log->best_epoch = best_epoch;
  return epoch;
}

}  // namespace detail

namespace {

void check_homogeneous(std::span<const EnergySample> samples, bool pooled) {
  const auto& first = samples.front();
  for (const auto& s : samples) {
    if (s.backend != first.backend) throw std::invalid_argument("mixed backends in training data");
    if (s.device_id != first.device_id) throw std::invalid_argument("mixed devices in training data");
    if (!pooled && s.config.pattern != first.config.pattern) {
      throw std::invalid_argument("mixed kernel patterns require a pooled model");
    }
    if (!std::isfinite(s.energy_mj) || s.energy_mj < 0.0) {
      throw std::invalid_argument("energy samples must be finite and non-negative");
    }
    check_valid(s.config);
  }
}

}  // namespace

PredictorModel train_predictor(std::span<const EnergySample> samples, const TrainConfig& config,
                               TrainLog* log) {
  if (samples.size() < kMinTrainingSamples) throw std::invalid_argument("insufficient training data");
  check_homogeneous(samples, config.pooled);

  PredictorModel model;
  model.backend = samples.front().backend;
  model.device_id = samples.front().device_id;
  model.pooled = config.pooled;
  model.feature_layout = std::string(config.pooled ? kPooledFeatureLayout : kFeatureLayout);
  if (config.pooled) {
    model.patterns.assign(kAllPatterns.begin(), kAllPatterns.end());
  } else {
    model.patterns = {samples.front().config.pattern};
  }

  // Feature statistics over the whole sample set.
  const std::size_t dim = detail::unnormalized_features(samples.front().config, config.pooled).size();
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  for (const auto& s : samples) {
    const auto f = detail::unnormalized_features(s.config, config.pooled);
    for (std::size_t j = 0; j < dim; ++j) {
      sum[j] += f[j];
      sq[j] += f[j] * f[j];
    }
  }
  const auto n = static_cast<double>(samples.size());
  model.feature_mean.resize(dim);
  model.feature_std.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const double mean = sum[j] / n;
    const double var = std::max(0.0, sq[j] / n - mean * mean);
    model.feature_mean[j] = mean;
    model.feature_std[j] = std::sqrt(var) > 1e-12 ? std::sqrt(var) : 1.0;
  }

  model.layer_dims.push_back(static_cast<int>(dim));
  for (int h : config.hidden_dims) {
    if (h < 1) throw std::invalid_argument("hidden layer widths must be >= 1");
    model.layer_dims.push_back(h);
  }
  model.layer_dims.push_back(1);

  double target_mean = 0.0;
  for (const auto& s : samples) target_mean += std::log1p(s.energy_mj);
  target_mean /= n;

  Rng init_rng(mix_seed(config.seed, "init"));
  for (std::size_t l = 0; l + 1 < model.layer_dims.size(); ++l) {
    DenseLayer layer;
    layer.in = model.layer_dims[l];
    layer.out = model.layer_dims[l + 1];
    const bool output = l + 2 == model.layer_dims.size();
    const double limit = std::sqrt(6.0 / layer.in) * (output ? 0.1 : 1.0);
    std::uniform_real_distribution<double> u(-limit, limit);
    layer.weights.resize(static_cast<std::size_t>(layer.in) * layer.out);
    for (auto& w : layer.weights) w = u(init_rng);
    layer.bias.assign(static_cast<std::size_t>(layer.out), output ? target_mean : 0.0);
    model.layers.push_back(std::move(layer));
  }

  const detail::Dataset all = detail::make_dataset(model, samples);
  std::vector<Eigen::Index> idx(samples.size());
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng split_rng(mix_seed(config.seed, "split"));
  std::shuffle(idx.begin(), idx.end(), split_rng);
  const auto n_val = static_cast<std::size_t>(
      std::clamp(config.validation_fraction, 0.0, 0.5) * static_cast<double>(samples.size()));
  const detail::Dataset val = detail::subset(all, std::span(idx).first(n_val));
  const detail::Dataset train = detail::subset(all, std::span(idx).subspan(n_val));

  detail::TrainerOptions opt;
  opt.seed = config.seed;
  opt.max_epochs = config.max_epochs;
  opt.learning_rate = config.learning_rate;
  opt.batch_size = config.batch_size;
  opt.patience = config.patience;
  opt.selection = detail::Selection::kValidationLoss;
  const int epochs = detail::run_training(model, train, n_val > 0 ? &val : nullptr, opt, log);

  // Never worse than the constant-mean predictor on the training data.
  const double mean_energy = all.energy.mean();
  const double baseline = std::sqrt((all.energy.array() - mean_energy).square().mean());
  if (detail::rmse_mj(model, all) > baseline) {
    auto& out = model.layers.back();
    std::fill(out.weights.begin(), out.weights.end(), 0.0);
    out.bias.assign(out.bias.size(), std::log1p(mean_energy));
    if (log) log->fell_back_to_mean = true;
  }

  model.training_meta = {config.seed, epochs, static_cast<std::int64_t>(samples.size())};
  return model;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double acc_at_k(std::span<const IdEnergy> predicted, std::span<const IdEnergy> truth, int k) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("acc_at_k: mismatched ids");
  if (k < 1 || static_cast<std::size_t>(k) > predicted.size()) {
    throw std::invalid_argument("acc_at_k: k must be in [1, n]");
  }
  auto ranked = [](std::span<const IdEnergy> v) {
    std::vector<IdEnergy> r(v.begin(), v.end());
    std::sort(r.begin(), r.end(), [](const IdEnergy& a, const IdEnergy& b) {
      if (a.second != b.second) return a.second < b.second;
      return a.first < b.first;
    });
    return r;
  };
  const auto p = ranked(predicted);
  const auto t = ranked(truth);
  {
    std::vector<std::string> a, b;
    for (const auto& x : p) a.push_back(x.first);
    for (const auto& x : t) b.push_back(x.first);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) throw std::invalid_argument("acc_at_k: mismatched ids");
  }
  std::set<std::string> top_truth;
  for (int i = 0; i < k; ++i) top_truth.insert(t[i].first);
  int hits = 0;
  for (int i = 0; i < k; ++i) hits += top_truth.count(p[i].first) ? 1 : 0;
  return static_cast<double>(hits) / k;
}

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("rmse: length mismatch");
  if (predicted.empty()) throw std::invalid_argument("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predicted.size()));
}

EvalMetrics evaluate(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("evaluate: length mismatch");
  std::vector<IdEnergy> p, t;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const std::string id = fmt::format("{:08d}", i);
    p.emplace_back(id, predicted[i]);
    t.emplace_back(id, truth[i]);
  }
  const int n = static_cast<int>(predicted.size());
  EvalMetrics m;
  m.acc_at_20 = acc_at_k(p, t, std::min(20, n));
  m.acc_at_10 = acc_at_k(p, t, std::min(10, n));
  m.acc_at_5 = acc_at_k(p, t, std::min(5, n));
  m.rmse_mj = rmse(predicted, truth);
  return m;
}

EvalMetrics evaluate(const PredictorModel& model, std::span<const EnergySample> samples) {
  std::vector<double> pred, truth;
  for (const auto& s : samples) {
    pred.push_back(predict_kernel(model, s.config));
    truth.push_back(s.energy_mj);
  }
  return evaluate(pred, truth);
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

int to_int(std::string_view s) {
  std::size_t used = 0;
  const int v = std::stoi(std::string(s), &used);
  if (used != s.size()) throw std::invalid_argument(fmt::format("bad integer '{}'", s));
  return v;
}

double to_double(std::string_view s) {
  std::size_t used = 0;
  const double v = std::stod(std::string(s), &used);
  if (used != s.size()) throw std::invalid_argument(fmt::format("bad number '{}'", s));
  return v;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

void write_samples_csv(std::ostream& out, std::span<const EnergySample> samples) {
  out << kSampleCsvHeader << '\n';
  for (const auto& s : samples) {
    const auto& c = s.config;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", to_string(c.pattern), c.height, c.width,
                       c.in_channels, c.out_channels, c.kernel_size, c.stride, to_string(s.backend),
                       s.device_id, s.energy_mj);
  }
}

std::vector<EnergySample> read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kSampleCsvHeader) {
    throw std::invalid_argument("energy sample file is missing its header row");
  }
  std::vector<EnergySample> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 10) {
      throw std::invalid_argument(fmt::format("line {}: expected 10 fields, got {}", line_no, f.size()));
    }
    try {
      EnergySample s;
      s.config = {parse_pattern(f[0]), to_int(f[1]), to_int(f[2]), to_int(f[3]),
                  to_int(f[4]),        to_int(f[5]), to_int(f[6])};
      s.backend = parse_backend(f[7]);
      s.device_id = std::string(f[8]);
      s.energy_mj = to_double(f[9]);
      check_valid(s.config);
      if (!std::isfinite(s.energy_mj) || s.energy_mj < 0) throw std::invalid_argument("negative energy");
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::invalid_argument(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

void save_samples(const std::string& path, std::span<const EnergySample> samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_samples_csv(out, samples);
}

std::vector<EnergySample> load_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_samples_csv(in);
}

void write_configs_csv(std::ostream& out, std::span<const KernelConfig> configs, Backend backend,
                       std::string_view device_id) {
  out << "pattern,H,W,Cin,Cout,KS,stride,backend,device_id\n";
  for (const auto& c : configs) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(c.pattern), c.height, c.width,
                       c.in_channels, c.out_channels, c.kernel_size, c.stride, to_string(backend),
                       device_id);
  }
}

std::string model_to_json(const PredictorModel& m) {
  nlohmann::ordered_json j;
  j["format"] = "hwnas-energy-predictor";
  j["version"] = 1;
  j["backend"] = std::string(to_string(m.backend));
  j["device_id"] = m.device_id;
  j["pooled"] = m.pooled;
  auto patterns = nlohmann::ordered_json::array();
  for (auto p : m.patterns) patterns.push_back(std::string(to_string(p)));
  j["patterns"] = std::move(patterns);
  j["feature_layout"] = m.feature_layout;
  j["layer_dims"] = m.layer_dims;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : m.layers) {
    nlohmann::ordered_json jl;
    jl["in"] = l.in;
    jl["out"] = l.out;
    jl["weights"] = l.weights;
    jl["bias"] = l.bias;
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  j["feature_stats"] = {{"mean", m.feature_mean}, {"std", m.feature_std}};
  j["target_transform"] = m.target_transform;
  j["training_meta"] = {{"seed", m.training_meta.seed},
                        {"epochs", m.training_meta.epochs},
                        {"sample_count", m.training_meta.sample_count}};
  return j.dump(1);
}

PredictorModel model_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "hwnas-energy-predictor") {
      throw std::invalid_argument("not a predictor file");
    }
    PredictorModel m;
    m.backend = parse_backend(j.at("backend").get<std::string>());
    m.device_id = j.at("device_id").get<std::string>();
    m.pooled = j.at("pooled").get<bool>();
    for (const auto& p : j.at("patterns")) m.patterns.push_back(parse_pattern(p.get<std::string>()));
    m.feature_layout = j.at("feature_layout").get<std::string>();
    m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    for (const auto& jl : j.at("layers")) {
      DenseLayer l;
      l.in = jl.at("in").get<int>();
      l.out = jl.at("out").get<int>();
      l.weights = jl.at("weights").get<std::vector<double>>();
      l.bias = jl.at("bias").get<std::vector<double>>();
      if (l.weights.size() != static_cast<std::size_t>(l.in) * l.out ||
          l.bias.size() != static_cast<std::size_t>(l.out)) {
        throw std::invalid_argument("layer weight shape mismatch");
      }
      m.layers.push_back(std::move(l));
    }
    if (m.layers.size() + 1 != m.layer_dims.size()) throw std::invalid_argument("layer count mismatch");
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      if (m.layers[i].in != m.layer_dims[i] || m.layers[i].out != m.layer_dims[i + 1]) {
        throw std::invalid_argument("layer dims mismatch");
      }
    }
    m.feature_mean = j.at("feature_stats").at("mean").get<std::vector<double>>();
    m.feature_std = j.at("feature_stats").at("std").get<std::vector<double>>();
    m.target_transform = j.at("target_transform").get<std::string>();
    if (m.target_transform != "log1p") throw std::invalid_argument("unsupported target transform");
    const auto& meta = j.at("training_meta");
    m.training_meta = {meta.at("seed").get<std::uint64_t>(), meta.at("epochs").get<int>(),
                       meta.at("sample_count").get<std::int64_t>()};
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("malformed predictor file: {}", e.what()));
  }
}

void save_model(const std::string& path, const PredictorModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << model_to_json(model) << '\n';
}

PredictorModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace hwnas
