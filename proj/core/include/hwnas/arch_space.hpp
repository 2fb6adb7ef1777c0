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
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hwnas/kernel_config.hpp"

namespace hwnas {

// ---------------------------------------------------------------------------
// Operations on cell edges
// ---------------------------------------------------------------------------

struct Zeroize {
  bool operator==(const Zeroize&) const = default;
};
struct Skip {
  bool operator==(const Skip&) const = default;
};
struct AvgPool3x3 {
  bool operator==(const AvgPool3x3&) const = default;
};

/// Convolution edge. `out_channels == kInheritChannels` means "use the
/// enclosing stack's channel count", which is how the base space is written.
struct Conv {
  static constexpr int kInheritChannels = 0;
  int kernel_size = 3;
  int out_channels = kInheritChannels;
  int stride = 1;
  bool operator==(const Conv&) const = default;
};

using OpKind = std::variant<Zeroize, Skip, Conv, AvgPool3x3>;

/// Coarse class used by the embedding one-hot.
enum class OpClass : std::uint8_t { kZeroize, kSkip, kConvPointwise, kConvSpatial, kAvgPool };
inline constexpr int kOpClassCount = 5;

OpClass op_class(const OpKind& op);
std::string to_string(const OpKind& op);
/// Inverse of to_string: "zeroize", "skip", "avgpool3x3", "conv_k3_c*_s1", "conv_k5_c32_s2".
OpKind parse_op(std::string_view text);

inline bool is_conv(const OpKind& op) { return std::holds_alternative<Conv>(op); }

/// Expanded-space option sets.
inline constexpr std::array<int, 15> kExpandedOutChannels{1,  2,  3,  4,  5,   6,  7,  8,
                                                          9, 10, 16, 32, 64, 128, 256};
inline constexpr std::array<int, 4> kExpandedKernelSizes{1, 3, 5, 7};
inline constexpr std::array<int, 2> kExpandedStrides{1, 2};

/// The five operations of the base space, in enumeration order.
std::array<OpKind, 5> base_ops();

// ---------------------------------------------------------------------------
// Topology and architecture
// ---------------------------------------------------------------------------

inline constexpr int kCellNodes = 4;
inline constexpr int kCellEdges = 6;
inline constexpr int kStackCount = 3;

struct CellEdge {
  int from;
  int to;
};

/// Edge order shared by enumeration, embedding and serialization.
inline constexpr std::array<CellEdge, kCellEdges> kCellEdgeOrder{
    {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

std::string edge_name(int edge_index);

struct CellTopology {
  std::array<OpKind, kCellEdges> edge_ops{};

  const OpKind& op(int from, int to) const;
  bool operator==(const CellTopology&) const = default;
};

struct StackConfig {
  int cells_per_stack = 5;
  int base_out_channels = 16;
  bool operator==(const StackConfig&) const = default;
};

using StackList = std::array<StackConfig, kStackCount>;

inline constexpr StackList kDefaultStacks{{{5, 16}, {5, 32}, {5, 64}}};
inline constexpr int kDefaultInputChannels = 16;

struct TensorShape {
  int height = 1;
  int width = 1;
  int channels = 1;
  bool operator==(const TensorShape&) const = default;
};

inline constexpr TensorShape kDefaultInput{32, 32, kDefaultInputChannels};

/// Immutable search-space element; `id()` is a content hash, so equal
/// architectures carry equal ids.
class Architecture {
 public:
  explicit Architecture(CellTopology cell, StackList stacks = kDefaultStacks,
                        int initial_input_channels = kDefaultInputChannels);

  const CellTopology& cell() const { return cell_; }
  const StackList& stacks() const { return stacks_; }
  int initial_input_channels() const { return initial_input_channels_; }
  const std::string& id() const { return id_; }

  Architecture with_edge(int edge_index, OpKind op) const;
  int conv_edge_count() const;

  bool operator==(const Architecture& other) const {
    return cell_ == other.cell_ && stacks_ == other.stacks_ &&
           initial_input_channels_ == other.initial_input_channels_;
  }

 private:
  CellTopology cell_;
  StackList stacks_;
  int initial_input_channels_;
  std::string id_;
};

// ---------------------------------------------------------------------------
// Enumeration and expansion
// ---------------------------------------------------------------------------

inline constexpr std::size_t kBaseSpaceSize = 15625;

/// Index in [0, 15625): edge 0 is the most significant base-5 digit.
Architecture base_architecture(std::size_t index);
void for_each_base_architecture(const std::function<void(const Architecture&)>& visit);
std::vector<Architecture> enumerate_base_space();

struct ExpansionGrid {
  std::vector<int> kernel_sizes;
  std::vector<int> out_channels;
  std::vector<int> strides;

  static ExpansionGrid full();
  /// Throws std::invalid_argument on empty dimensions or values outside
  /// the expanded option sets.
  void check() const;
  std::size_t options_per_edge() const;
};

/// Every conv edge independently takes every (kernel, channels, stride) of the
/// grid; other edges are left alone. Order is deterministic, duplicates are
/// dropped by id.
std::vector<Architecture> expand_architecture(const Architecture& arch, const ExpansionGrid& grid);
/// Size of expand_architecture's output, computed analytically.
std::uint64_t expansion_count(const Architecture& arch, const ExpansionGrid& grid);

// ---------------------------------------------------------------------------
// Validation and lowering
// ---------------------------------------------------------------------------

struct ValidityIssue {
  std::string edge;
  std::string message;
};

struct ValidityReport {
  bool valid = true;
  std::vector<ValidityIssue> reasons;
};

enum class LoweredKind : std::uint8_t { kConv, kAvgPool, kSkip };

/// One executable edge. Destinations accumulate (sum) their inputs.
struct LoweredOp {
  LoweredKind kind = LoweredKind::kSkip;
  int src = 0;
  int dst = 0;
  KernelConfig kernel;  // meaningful for kConv and kAvgPool
  bool residual = false;
};

/// Architecture unrolled into a tensor graph in execution order. Edges that
/// cannot carry signal from the cell input to the cell output are pruned.
struct LoweredNet {
  std::vector<TensorShape> tensors;
  std::vector<LoweredOp> ops;
  int input = 0;
  int output = 0;
};

ValidityReport validate(const Architecture& arch, const TensorShape& input = kDefaultInput);

/// Throws std::invalid_argument("architecture failed shape validation: ...").
LoweredNet lower(const Architecture& arch, const TensorShape& input = kDefaultInput);

std::vector<KernelConfig> extract_kernels(const Architecture& arch,
                                          const TensorShape& input = kDefaultInput);

// ---------------------------------------------------------------------------
// Sampling and embedding
// ---------------------------------------------------------------------------

/// Quantile strata over a scalar (typically predicted energy).
struct EnergyStrata {
  int buckets = 4;
  std::function<double(const Architecture&)> energy;
};

/// n distinct architectures drawn from the valid members of `pool`. With
/// strata, bucket counts differ by at most one.
std::vector<Architecture> sample_space(std::span<const Architecture> pool, std::uint64_t seed,
                                       std::size_t n,
                                       const std::optional<EnergyStrata>& strata = std::nullopt,
                                       const TensorShape& input = kDefaultInput);
/// Same, over the base space.
std::vector<Architecture> sample_space(std::uint64_t seed, std::size_t n,
                                       const std::optional<EnergyStrata>& strata = std::nullopt);

/// Per edge: 5-way op-class one-hot then (kernel/7, log2(channels)/8,
/// stride-1); then per stack log2(base channels)/8.
inline constexpr int kEdgeBlockWidth = kOpClassCount + 3;
inline constexpr int kEmbeddingDim = kCellEdges * kEdgeBlockWidth + kStackCount;

using ArchEmbedding = std::array<double, kEmbeddingDim>;

ArchEmbedding embed(const Architecture& arch);

// ---------------------------------------------------------------------------
// Line-delimited serialization
// ---------------------------------------------------------------------------

std::string to_record(const Architecture& arch);
/// Throws std::invalid_argument on malformed records or an id mismatch.
Architecture parse_record(std::string_view line);

}  // namespace hwnas
