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

#include "hwnas/kernel_config.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace hwnas {

std::string_view to_string(KernelPattern pattern) {
  switch (pattern) {
    case KernelPattern::kConvBnRelu:
      return "conv+bn+relu";
    case KernelPattern::kDwConvBnRelu:
      return "dwconv+bn+relu";
    case KernelPattern::kAvgPool:
      return "avgpool";
  }
  return "unknown";
}

KernelPattern parse_pattern(std::string_view text) {
  for (const auto p : kAllPatterns) {
    if (to_string(p) == text) return p;
  }
  throw std::invalid_argument(fmt::format("unknown kernel pattern '{}'", text));
}

std::int64_t KernelConfig::macs() const {
  const std::int64_t spatial = std::int64_t{out_height()} * out_width();
  const std::int64_t window = std::int64_t{kernel_size} * kernel_size;
  switch (pattern) {
    case KernelPattern::kConvBnRelu:
      return spatial * out_channels * in_channels * window;
    case KernelPattern::kDwConvBnRelu:
    case KernelPattern::kAvgPool:
      return spatial * out_channels * window;
  }
  return 0;
}

std::int64_t KernelConfig::input_bytes() const {
  return std::int64_t{height} * width * in_channels * 4;
}

std::int64_t KernelConfig::output_bytes() const {
  return std::int64_t{out_height()} * out_width() * out_channels * 4;
}

namespace {

const char* first_violation(const KernelConfig& c) {
  if (c.height < 1 || c.width < 1) return "spatial dims must be >= 1";
  if (c.in_channels < 1 || c.out_channels < 1) return "channels must be >= 1";
  if (std::find(kKernelSizes.begin(), kKernelSizes.end(), c.kernel_size) == kKernelSizes.end())
    return "kernel size must be one of 1, 3, 5, 7";
  if (std::find(kStrides.begin(), kStrides.end(), c.stride) == kStrides.end())
    return "stride must be 1 or 2";
  if (c.pattern == KernelPattern::kAvgPool && c.in_channels != c.out_channels)
    return "avgpool requires Cout == Cin";
  return nullptr;
}

}  // namespace

bool is_valid(const KernelConfig& config) { return first_violation(config) == nullptr; }

void check_valid(const KernelConfig& config) {
  if (const char* why = first_violation(config)) {
    throw std::invalid_argument(fmt::format("invalid kernel {}: {}", describe(config), why));
  }
}

std::string describe(const KernelConfig& c) {
  return fmt::format("{}[{}x{}x{}->{} k{} s{}]", to_string(c.pattern), c.height, c.width,
                     c.in_channels, c.out_channels, c.kernel_size, c.stride);
}

}  // namespace hwnas
