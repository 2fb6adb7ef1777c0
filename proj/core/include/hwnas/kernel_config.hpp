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
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace hwnas {

enum class KernelPattern : std::uint8_t { kConvBnRelu, kDwConvBnRelu, kAvgPool };

inline constexpr std::array<KernelPattern, 3> kAllPatterns{
    KernelPattern::kConvBnRelu, KernelPattern::kDwConvBnRelu, KernelPattern::kAvgPool};

std::string_view to_string(KernelPattern pattern);
KernelPattern parse_pattern(std::string_view text);

inline constexpr bool is_conv_family(KernelPattern p) {
  return p == KernelPattern::kConvBnRelu || p == KernelPattern::kDwConvBnRelu;
}

inline constexpr std::array<int, 4> kKernelSizes{1, 3, 5, 7};
inline constexpr std::array<int, 2> kStrides{1, 2};

constexpr int ceil_div(int value, int divisor) { return (value + divisor - 1) / divisor; }

/// One operator instance, the unit of energy prediction. Spatial padding is
/// "same", so the output extent is ceil(H / stride).
struct KernelConfig {
  KernelPattern pattern = KernelPattern::kConvBnRelu;
  int height = 1;
  int width = 1;
  int in_channels = 1;
  int out_channels = 1;
  int kernel_size = 1;
  int stride = 1;

  auto operator<=>(const KernelConfig&) const = default;

  int out_height() const { return ceil_div(height, stride); }
  int out_width() const { return ceil_div(width, stride); }

  /// Multiply-accumulates. Depthwise convs see one input channel per output
  /// channel; average pooling accumulates over its window.
  std::int64_t macs() const;
  /// float32 activations.
  std::int64_t input_bytes() const;
  std::int64_t output_bytes() const;
};

bool is_valid(const KernelConfig& config);
/// Throws std::invalid_argument naming the first broken invariant.
void check_valid(const KernelConfig& config);

std::string describe(const KernelConfig& config);

}  // namespace hwnas
