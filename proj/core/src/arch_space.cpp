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

#include "hwnas/arch_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hwnas/seed.hpp"

namespace hwnas {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool contains(std::span<const int> values, int v) {
  return std::find(values.begin(), values.end(), v) != values.end();
}

int parse_int(std::string_view text, std::string_view context) {
  int value = 0;
  if (text.empty()) throw std::invalid_argument(fmt::format("malformed op '{}'", context));
  for (const char c : text) {
    if (c < '0' || c > '9') throw std::invalid_argument(fmt::format("malformed op '{}'", context));
    value = value * 10 + (c - '0');
  }
  return value;
}

std::string canonical_form(const CellTopology& cell, const StackList& stacks, int input_channels) {
  std::string out = "ops=";
  for (int e = 0; e < kCellEdges; ++e) {
    if (e) out += '|';
    out += to_string(cell.edge_ops[e]);
  }
  out += ";stacks=";
  for (int s = 0; s < kStackCount; ++s) {
    if (s) out += ',';
    out += fmt::format("{}x{}", stacks[s].cells_per_stack, stacks[s].base_out_channels);
  }
  out += fmt::format(";in={}", input_channels);
  return out;
}

}  // namespace

OpClass op_class(const OpKind& op) {
  return std::visit(Overloaded{
                        [](const Zeroize&) { return OpClass::kZeroize; },
                        [](const Skip&) { return OpClass::kSkip; },
                        [](const AvgPool3x3&) { return OpClass::kAvgPool; },
                        [](const Conv& c) {
                          return c.kernel_size == 1 ? OpClass::kConvPointwise
                                                    : OpClass::kConvSpatial;
                        },
                    },
                    op);
}

std::string to_string(const OpKind& op) {
  return std::visit(Overloaded{
                        [](const Zeroize&) { return std::string("zeroize"); },
                        [](const Skip&) { return std::string("skip"); },
                        [](const AvgPool3x3&) { return std::string("avgpool3x3"); },
                        [](const Conv& c) {
                          if (c.out_channels == Conv::kInheritChannels) {
                            return fmt::format("conv_k{}_c*_s{}", c.kernel_size, c.stride);
                          }
                          return fmt::format("conv_k{}_c{}_s{}", c.kernel_size, c.out_channels,
                                             c.stride);
                        },
                    },
                    op);
}

OpKind parse_op(std::string_view text) {
  if (text == "zeroize") return Zeroize{};
  if (text == "skip") return Skip{};
  if (text == "avgpool3x3") return AvgPool3x3{};
  if (!text.starts_with("conv_k")) throw std::invalid_argument(fmt::format("unknown op '{}'", text));
  const auto c_pos = text.find("_c", 6);
  const auto s_pos = text.find("_s", c_pos == std::string_view::npos ? 6 : c_pos + 2);
  if (c_pos == std::string_view::npos || s_pos == std::string_view::npos) {
    throw std::invalid_argument(fmt::format("malformed op '{}'", text));
  }
  Conv conv;
  conv.kernel_size = parse_int(text.substr(6, c_pos - 6), text);
  const auto channels = text.substr(c_pos + 2, s_pos - c_pos - 2);
  conv.out_channels = channels == "*" ? Conv::kInheritChannels : parse_int(channels, text);
  conv.stride = parse_int(text.substr(s_pos + 2), text);
  return conv;
}

std::array<OpKind, 5> base_ops() {
  return {Zeroize{}, Skip{}, Conv{1, Conv::kInheritChannels, 1}, Conv{3, Conv::kInheritChannels, 1},
          AvgPool3x3{}};
}

std::string edge_name(int edge_index) {
  const auto& e = kCellEdgeOrder.at(static_cast<std::size_t>(edge_index));
  return fmt::format("{}->{}", e.from, e.to);
}

const OpKind& CellTopology::op(int from, int to) const {
  for (int e = 0; e < kCellEdges; ++e) {
    if (kCellEdgeOrder[e].from == from && kCellEdgeOrder[e].to == to) return edge_ops[e];
  }
  throw std::out_of_range(fmt::format("no cell edge {}->{}", from, to));
}

Architecture::Architecture(CellTopology cell, StackList stacks, int initial_input_channels)
    : cell_(std::move(cell)), stacks_(stacks), initial_input_channels_(initial_input_channels) {
  id_ = fmt::format("{:016x}",
                    fnv1a64(canonical_form(cell_, stacks_, initial_input_channels_)));
}

Architecture Architecture::with_edge(int edge_index, OpKind op) const {
  CellTopology cell = cell_;
  cell.edge_ops.at(static_cast<std::size_t>(edge_index)) = std::move(op);
  return Architecture(std::move(cell), stacks_, initial_input_channels_);
}

int Architecture::conv_edge_count() const {
  return static_cast<int>(std::count_if(cell_.edge_ops.begin(), cell_.edge_ops.end(),
                                        [](const OpKind& op) { return is_conv(op); }));
}

// ---------------------------------------------------------------------------

Architecture base_architecture(std::size_t index) {
  if (index >= kBaseSpaceSize) throw std::out_of_range("base space index out of range");
  const auto ops = base_ops();
  CellTopology cell;
  for (int e = kCellEdges - 1; e >= 0; --e) {
    cell.edge_ops[e] = ops[index % 5];
    index /= 5;
  }
  return Architecture(std::move(cell));
}

void for_each_base_architecture(const std::function<void(const Architecture&)>& visit) {
  for (std::size_t i = 0; i < kBaseSpaceSize; ++i) visit(base_architecture(i));
}

std::vector<Architecture> enumerate_base_space() {
  std::vector<Architecture> out;
  out.reserve(kBaseSpaceSize);
  for_each_base_architecture([&](const Architecture& a) { out.push_back(a); });
  return out;
}

ExpansionGrid ExpansionGrid::full() {
  return {{kExpandedKernelSizes.begin(), kExpandedKernelSizes.end()},
          {kExpandedOutChannels.begin(), kExpandedOutChannels.end()},
          {kExpandedStrides.begin(), kExpandedStrides.end()}};
}

void ExpansionGrid::check() const {
  if (kernel_sizes.empty() || out_channels.empty() || strides.empty()) {
    throw std::invalid_argument("empty expansion grid");
  }
  for (int k : kernel_sizes) {
    if (!contains(kExpandedKernelSizes, k))
      throw std::invalid_argument(fmt::format("kernel size {} outside the expanded space", k));
  }
  for (int c : out_channels) {
    if (!contains(kExpandedOutChannels, c))
      throw std::invalid_argument(fmt::format("out channels {} outside the expanded space", c));
  }
  for (int s : strides) {
    if (!contains(kExpandedStrides, s))
      throw std::invalid_argument(fmt::format("stride {} outside the expanded space", s));
  }
}

namespace {

std::vector<int> distinct(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

std::size_t ExpansionGrid::options_per_edge() const {
  return distinct(kernel_sizes).size() * distinct(out_channels).size() * distinct(strides).size();
}

std::uint64_t expansion_count(const Architecture& arch, const ExpansionGrid& grid) {
  grid.check();
  std::uint64_t count = 1;
  const std::uint64_t per_edge = grid.options_per_edge();
  for (int e = 0; e < arch.conv_edge_count(); ++e) count *= per_edge;
  return count;
}

std::vector<Architecture> expand_architecture(const Architecture& arch, const ExpansionGrid& grid) {
  grid.check();
  std::vector<Conv> options;
  for (int k : grid.kernel_sizes)
    for (int c : grid.out_channels)
      for (int s : grid.strides) options.push_back(Conv{k, c, s});

  std::vector<int> conv_edges;
  for (int e = 0; e < kCellEdges; ++e) {
    if (is_conv(arch.cell().edge_ops[e])) conv_edges.push_back(e);
  }

  std::vector<Architecture> out;
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> digit(conv_edges.size(), 0);
  while (true) {
    CellTopology cell = arch.cell();
    for (std::size_t i = 0; i < conv_edges.size(); ++i) cell.edge_ops[conv_edges[i]] = options[digit[i]];
    Architecture variant(std::move(cell), arch.stacks(), arch.initial_input_channels());
    if (seen.insert(variant.id()).second) out.push_back(std::move(variant));

    // odometer, last conv edge fastest
    std::size_t pos = digit.size();
    while (pos > 0) {
      --pos;
      if (++digit[pos] < options.size()) break;
      digit[pos] = 0;
      if (pos == 0) return out;
    }
    if (digit.empty()) return out;
  }
}

// ---------------------------------------------------------------------------
// Validation / lowering
// ---------------------------------------------------------------------------

namespace {

struct Liveness {
  std::array<bool, kCellEdges> live{};
  bool connected = false;
};

Liveness analyze(const CellTopology& cell) {
  std::array<bool, kCellNodes> reach_in{true, false, false, false};
  std::array<bool, kCellNodes> reach_out{false, false, false, true};
  for (int e = 0; e < kCellEdges; ++e) {
    const auto [from, to] = kCellEdgeOrder[e];
    if (!std::holds_alternative<Zeroize>(cell.edge_ops[e]) && reach_in[from]) reach_in[to] = true;
  }
  for (int e = kCellEdges - 1; e >= 0; --e) {
    const auto [from, to] = kCellEdgeOrder[e];
    if (!std::holds_alternative<Zeroize>(cell.edge_ops[e]) && reach_out[to]) reach_out[from] = true;
  }
  Liveness l;
  l.connected = reach_in[3];
  for (int e = 0; e < kCellEdges; ++e) {
    const auto [from, to] = kCellEdgeOrder[e];
    l.live[e] = !std::holds_alternative<Zeroize>(cell.edge_ops[e]) && reach_in[from] && reach_out[to];
  }
  return l;
}

std::string shape_str(const TensorShape& s) {
  return fmt::format("{}x{}x{}", s.height, s.width, s.channels);
}

bool channel_preserving(const OpKind& op) {
  return std::holds_alternative<Skip>(op) || std::holds_alternative<AvgPool3x3>(op);
}

bool lower_impl(const Architecture& arch, const TensorShape& input, LoweredNet* net,
                ValidityReport& report) {
  auto fail = [&](std::string edge, std::string message) {
    report.valid = false;
    report.reasons.push_back({std::move(edge), std::move(message)});
  };

  if (input.height < 1 || input.width < 1 || input.channels < 1) {
    fail("input", "input shape must be positive");
  } else if (input.channels != arch.initial_input_channels()) {
    fail("input", fmt::format("input has {} channels but the architecture expects {}",
                              input.channels, arch.initial_input_channels()));
  }
  for (int s = 0; s < kStackCount; ++s) {
    const auto& st = arch.stacks()[s];
    if (st.cells_per_stack < 1 || st.base_out_channels < 1) {
      fail(fmt::format("stack{}", s), "stack needs >= 1 cell and >= 1 channel");
    }
  }
  const auto& cell = arch.cell();
  for (int e = 0; e < kCellEdges; ++e) {
    const auto* conv = std::get_if<Conv>(&cell.edge_ops[e]);
    if (!conv) continue;
    if (!contains(kExpandedKernelSizes, conv->kernel_size))
      fail(edge_name(e), fmt::format("unsupported kernel size {}", conv->kernel_size));
    if (!contains(kExpandedStrides, conv->stride))
      fail(edge_name(e), fmt::format("unsupported stride {}", conv->stride));
    if (conv->out_channels != Conv::kInheritChannels &&
        !contains(kExpandedOutChannels, conv->out_channels))
      fail(edge_name(e), fmt::format("unsupported out channels {}", conv->out_channels));
  }
  const Liveness liveness = analyze(cell);
  if (!liveness.connected) fail("cell", "no signal path from cell input to output");
  if (!report.valid) return false;

  LoweredNet local;
  LoweredNet& out = net ? *net : local;
  out = LoweredNet{};
  out.tensors.push_back(input);
  int current = 0;

  for (int s = 0; s < kStackCount; ++s) {
    const int stack_channels = arch.stacks()[s].base_out_channels;
    for (int c = 0; c < arch.stacks()[s].cells_per_stack; ++c) {
      std::array<int, kCellNodes> node_tensor{current, -1, -1, -1};
      for (int to = 1; to < kCellNodes; ++to) {
        std::optional<TensorShape> node_shape;
        int first_edge = -1;
        const std::size_t ops_before = out.ops.size();
        for (int e = 0; e < kCellEdges; ++e) {
          if (kCellEdgeOrder[e].to != to || !liveness.live[e]) continue;
          const int src = node_tensor[kCellEdgeOrder[e].from];
          const TensorShape in = out.tensors[src];
          const OpKind& op = cell.edge_ops[e];
          LoweredOp lowered;
          lowered.src = src;
          TensorShape produced = in;
          if (const auto* conv = std::get_if<Conv>(&op)) {
            const int cout =
                conv->out_channels == Conv::kInheritChannels ? stack_channels : conv->out_channels;
            produced = {ceil_div(in.height, conv->stride), ceil_div(in.width, conv->stride), cout};
            lowered.kind = LoweredKind::kConv;
            lowered.kernel = {KernelPattern::kConvBnRelu, in.height, in.width, in.channels, cout,
                              conv->kernel_size, conv->stride};
          } else if (std::holds_alternative<AvgPool3x3>(op)) {
            lowered.kind = LoweredKind::kAvgPool;
            lowered.kernel = {KernelPattern::kAvgPool, in.height, in.width, in.channels,
                              in.channels, 3, 1};
          } else {
            lowered.kind = LoweredKind::kSkip;
          }

          if (!node_shape) {
            node_shape = produced;
            first_edge = e;
          } else if (*node_shape != produced) {
            const std::string where = fmt::format("stack{}.cell{}:{},{}", s, c,
                                                  edge_name(first_edge), edge_name(e));
            const std::string a = fmt::format("edge {} ({}) yields {}", edge_name(first_edge),
                                              to_string(cell.edge_ops[first_edge]),
                                              shape_str(*node_shape));
            const std::string b = fmt::format("edge {} ({}) yields {}", edge_name(e),
                                              to_string(op), shape_str(produced));
            if (node_shape->height != produced.height || node_shape->width != produced.width) {
              fail(where, fmt::format("spatial mismatch at node {}: {} but {}", to, a, b));
            } else if (channel_preserving(op) || channel_preserving(cell.edge_ops[first_edge])) {
              fail(where, fmt::format("channel mismatch at node {}: {} but {}; "
                                      "skip/pool edges cannot change channels",
                                      to, a, b));
            } else {
              fail(where, fmt::format("channel mismatch at node {}: {} but {}", to, a, b));
            }
            return false;
          }
          out.ops.push_back(lowered);
        }
        if (!node_shape) continue;
        node_tensor[to] = static_cast<int>(out.tensors.size());
        out.tensors.push_back(*node_shape);
        for (std::size_t i = ops_before; i < out.ops.size(); ++i) out.ops[i].dst = node_tensor[to];
      }
      current = node_tensor[3];
    }
    if (s + 1 < kStackCount) {
      const TensorShape in = out.tensors[current];
      const int cout = arch.stacks()[s + 1].base_out_channels;
      LoweredOp residual;
      residual.kind = LoweredKind::kConv;
      residual.residual = true;
      residual.src = current;
      residual.kernel = {KernelPattern::kConvBnRelu, in.height, in.width, in.channels, cout, 3, 2};
      residual.dst = static_cast<int>(out.tensors.size());
      out.tensors.push_back({ceil_div(in.height, 2), ceil_div(in.width, 2), cout});
      out.ops.push_back(residual);
      current = residual.dst;
    }
  }
  out.input = 0;
  out.output = current;
  return true;
}

}  // namespace

ValidityReport validate(const Architecture& arch, const TensorShape& input) {
  ValidityReport report;
  lower_impl(arch, input, nullptr, report);
  return report;
}

LoweredNet lower(const Architecture& arch, const TensorShape& input) {
  ValidityReport report;
  LoweredNet net;
  if (!lower_impl(arch, input, &net, report)) {
    std::string why;
    for (const auto& r : report.reasons) {
      if (!why.empty()) why += "; ";
      why += r.edge + ": " + r.message;
    }
    throw std::invalid_argument("architecture failed shape validation: " + why);
  }
  return net;
}

std::vector<KernelConfig> extract_kernels(const Architecture& arch, const TensorShape& input) {
  const LoweredNet net = lower(arch, input);
  std::vector<KernelConfig> kernels;
  for (const auto& op : net.ops) {
    if (op.kind != LoweredKind::kSkip) kernels.push_back(op.kernel);
  }
  return kernels;
}

// ---------------------------------------------------------------------------
// Sampling / embedding
// ---------------------------------------------------------------------------

std::vector<Architecture> sample_space(std::span<const Architecture> pool, std::uint64_t seed,
                                       std::size_t n, const std::optional<EnergyStrata>& strata,
                                       const TensorShape& input) {
  if (n == 0) throw std::invalid_argument("sample_space: n must be >= 1");
  std::vector<std::size_t> valid;
  {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (validate(pool[i], input).valid && seen.insert(pool[i].id()).second) valid.push_back(i);
    }
  }
  if (n > valid.size()) {
    throw std::invalid_argument(
        fmt::format("sample_space: requested {} but only {} valid architectures", n, valid.size()));
  }
  Rng rng(mix_seed(seed, "sample_space"));
  std::vector<Architecture> out;
  out.reserve(n);
  if (!strata) {
    std::shuffle(valid.begin(), valid.end(), rng);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[valid[i]]);
    return out;
  }

  if (strata->buckets < 1 || !strata->energy) {
    throw std::invalid_argument("sample_space: strata need >= 1 bucket and an energy function");
  }
  const auto buckets = static_cast<std::size_t>(strata->buckets);
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(valid.size());
  for (auto i : valid) ranked.emplace_back(strata->energy(pool[i]), i);
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return pool[a.second].id() < pool[b.second].id();
  });
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t lo = b * ranked.size() / buckets;
    const std::size_t hi = (b + 1) * ranked.size() / buckets;
    const std::size_t quota = n / buckets + (b < n % buckets ? 1 : 0);
    if (quota > hi - lo) {
      throw std::invalid_argument(
          fmt::format("sample_space: stratum {} holds {} architectures, {} requested", b, hi - lo,
                      quota));
    }
    std::vector<std::size_t> members;
    for (std::size_t r = lo; r < hi; ++r) members.push_back(ranked[r].second);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < quota; ++i) out.push_back(pool[members[i]]);
  }
  return out;
}

std::vector<Architecture> sample_space(std::uint64_t seed, std::size_t n,
                                       const std::optional<EnergyStrata>& strata) {
  const auto pool = enumerate_base_space();
  return sample_space(pool, seed, n, strata);
}

ArchEmbedding embed(const Architecture& arch) {
  ArchEmbedding v{};
  const auto& stacks = arch.stacks();
  for (int e = 0; e < kCellEdges; ++e) {
    double* block = v.data() + e * kEdgeBlockWidth;
    const OpKind& op = arch.cell().edge_ops[e];
    block[static_cast<int>(op_class(op))] = 1.0;
    if (const auto* conv = std::get_if<Conv>(&op)) {
      const int channels = conv->out_channels == Conv::kInheritChannels ? stacks[0].base_out_channels
                                                                        : conv->out_channels;
      block[kOpClassCount + 0] = conv->kernel_size / 7.0;
      block[kOpClassCount + 1] = std::log2(static_cast<double>(channels)) / 8.0;
      block[kOpClassCount + 2] = conv->stride - 1.0;
    }
  }
  for (int s = 0; s < kStackCount; ++s) {
    v[kCellEdges * kEdgeBlockWidth + s] =
        std::log2(static_cast<double>(stacks[s].base_out_channels)) / 8.0;
  }
  return v;
}

// ---------------------------------------------------------------------------

std::string to_record(const Architecture& arch) {
  nlohmann::ordered_json j;
  j["id"] = arch.id();
  auto ops = nlohmann::ordered_json::array();
  for (const auto& op : arch.cell().edge_ops) ops.push_back(to_string(op));
  j["edge_ops"] = std::move(ops);
  auto stacks = nlohmann::ordered_json::array();
  for (const auto& s : arch.stacks()) {
    stacks.push_back({{"cells", s.cells_per_stack}, {"channels", s.base_out_channels}});
  }
  j["stacks"] = std::move(stacks);
  j["input_channels"] = arch.initial_input_channels();
  return j.dump();
}

Architecture parse_record(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(fmt::format("malformed architecture record: {}", e.what()));
  }
  try {
    const auto& ops = j.at("edge_ops");
    if (!ops.is_array() || ops.size() != kCellEdges) {
      throw std::invalid_argument("architecture record needs exactly 6 edge_ops");
    }
    CellTopology cell;
    for (int e = 0; e < kCellEdges; ++e) cell.edge_ops[e] = parse_op(ops[e].get<std::string>());
    const auto& st = j.at("stacks");
    if (!st.is_array() || st.size() != kStackCount) {
      throw std::invalid_argument("architecture record needs exactly 3 stacks");
    }
    StackList stacks;
    for (int s = 0; s < kStackCount; ++s) {
      stacks[s] = {st[s].at("cells").get<int>(), st[s].at("channels").get<int>()};
    }
    Architecture arch(std::move(cell), stacks, j.at("input_channels").get<int>());
    if (j.contains("id") && j["id"].get<std::string>() != arch.id()) {
      throw std::invalid_argument(fmt::format("architecture id mismatch: record says {}, content hashes to {}",
                                              j["id"].get<std::string>(), arch.id()));
    }
    return arch;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("malformed architecture record: {}", e.what()));
  }
}

}  // namespace hwnas
