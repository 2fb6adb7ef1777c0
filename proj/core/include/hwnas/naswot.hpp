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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hwnas/arch_space.hpp"

namespace hwnas {

inline constexpr TensorShape kProbeShape{8, 8, 3};
inline constexpr int kProbeBatch = 8;

/// Channels x (batch * H * W), column = (b * H + y) * W + x.
using FeatureMap = Eigen::MatrixXf;

struct ConvWeights {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 1;
  int stride = 1;
  /// out_channels x (in_channels * k * k), column = (c * k + ky) * k + kx.
  Eigen::MatrixXf w;
};

/// Random-weight instance of an architecture at probe resolution.
struct TinyNet {
  std::string arch_id;
  TensorShape probe;
  ConvWeights stem;             // probe channels -> initial channels, BN, no ReLU
  LoweredNet graph;             // lowered at probe resolution
  std::vector<ConvWeights> op_weights;  // one per graph op; empty for skip/pool
  bool per_activation = false;  // one code bit per (channel, position) instead of per channel
  int relu_unit_count = 0;
};

TinyNet instantiate(const Architecture& arch, std::uint64_t seed, TensorShape probe = kProbeShape,
                    bool per_activation = false);

/// Standard-normal probe pixels.
struct ProbeBatch {
  int batch = 0;
  TensorShape shape;
  FeatureMap data;
};

ProbeBatch make_probe(int batch, TensorShape shape, std::uint64_t seed);

/// B x U matrix of 0/1, bit set when the pre-ReLU value is positive.
struct ActivationCodes {
  Eigen::MatrixXd codes;
  int batch() const { return static_cast<int>(codes.rows()); }
  int units() const { return static_cast<int>(codes.cols()); }
};

ActivationCodes activation_codes(const TinyNet& net, const ProbeBatch& batch);

struct ProxyScore {
  double n_s = -std::numeric_limits<double>::infinity();
  bool finite = false;
};

/// K = U - Hamming(c_i, c_j).
Eigen::MatrixXd code_kernel(const ActivationCodes& codes);
/// ln det K; singular K gives finite = false and n_s = -inf.
ProxyScore naswot_score(const ActivationCodes& codes);

struct NaswotConfig {
  std::uint64_t weight_seed = 0;
  std::uint64_t probe_seed = 1;
  int batch = kProbeBatch;
  TensorShape probe = kProbeShape;
  bool per_activation = false;
};

ProxyScore naswot_proxy(const Architecture& arch, const NaswotConfig& config = {});

}  // namespace hwnas
