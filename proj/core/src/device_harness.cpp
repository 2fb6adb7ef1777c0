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

#include "hwnas/device_harness.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "hwnas/seed.hpp"

namespace hwnas {

void VirtualDevice::check() const {
  if (!(coeffs.mj_per_mac > 0.0) || !(coeffs.mj_per_byte > 0.0)) {
    throw std::invalid_argument("device energy coefficients must be positive");
  }
  if (coeffs.static_mj < 0.0 || !(coeffs.scale > 0.0)) {
    throw std::invalid_argument("device static energy must be >= 0 and scale > 0");
  }
  if (sample_rate_hz < 100) throw std::invalid_argument("sample rate must be >= 100 Hz");
  if (noise_sigma < 0.0 || accuracy_noise < 0.0) throw std::invalid_argument("noise must be >= 0");
  if (!(supply_mv > 0.0) || !(idle_mw > 0.0)) throw std::invalid_argument("supply and idle power must be > 0");
}

double latency_ns_per_mac(Backend backend) { return backend == Backend::kCpu ? 2.0 : 0.5; }

double kernel_energy_mj(const VirtualDevice& d, const KernelConfig& k) {
  const double bytes = static_cast<double>(k.input_bytes() + k.output_bytes());
  return d.coeffs.scale * (d.coeffs.mj_per_mac * static_cast<double>(k.macs()) +
                           d.coeffs.mj_per_byte * bytes) +
         d.coeffs.static_mj;
}

namespace {

double relative_noise(double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) return 0.0;
  Rng rng(seed);
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

std::uint64_t device_seed(const VirtualDevice& d) { return mix_seed(d.seed, d.device_id); }

}  // namespace

double measure_kernel_mj(const VirtualDevice& device, const KernelConfig& kernel,
                         std::uint64_t run_seed) {
  const std::uint64_t seed = mix_seed(mix_seed(device_seed(device), describe(kernel)), run_seed);
  return std::max(0.0, kernel_energy_mj(device, kernel) * (1.0 + relative_noise(device.noise_sigma, seed)));
}

std::vector<EnergySample> measure_kernels(const VirtualDevice& device,
                                          std::span<const KernelConfig> kernels,
                                          std::uint64_t run_seed) {
  std::vector<EnergySample> out;
  out.reserve(kernels.size());
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    out.push_back({kernels[i], measure_kernel_mj(device, kernels[i], mix_seed(run_seed, i)),
                   device.backend, device.device_id});
  }
  return out;
}

double ground_truth_energy(const VirtualDevice& device, const Architecture& arch,
                           const TensorShape& input, std::uint64_t run_seed) {
  double total = 0.0;
  for (const auto& k : extract_kernels(arch, input)) total += kernel_energy_mj(device, k);
  const std::uint64_t seed = mix_seed(mix_seed(device_seed(device), arch.id()), run_seed);
  return std::max(0.0, total * (1.0 + relative_noise(device.noise_sigma, seed)));
}

double accuracy_field(const VirtualDevice& device, const ArchEmbedding& phi) {
  Rng rng(mix_seed(device.seed, "accuracy_field"));
  std::uniform_real_distribution<double> jitter(0.8, 1.2);

  // Capacity: a positive-leaning linear score that saturates.
  static constexpr std::array<double, kEdgeBlockWidth> kEdgeWeights{
      -0.3, 0.3, 0.8, 1.5, 0.2,  // zeroize, skip, conv 1x1, conv kxk, avgpool
      0.3,  0.0, -0.3};          // kernel/7, log2(channels)/8, stride-1
  double capacity = 0.0;
  for (int e = 0; e < kCellEdges; ++e) {
    for (int j = 0; j < kEdgeBlockWidth; ++j) {
      capacity += kEdgeWeights[j] * jitter(rng) * phi[e * kEdgeBlockWidth + j];
    }
  }
  for (int s = 0; s < kStackCount; ++s) {
    capacity += 0.1 * jitter(rng) * phi[kCellEdges * kEdgeBlockWidth + s];
  }
  const double saturating = 1.0 - std::exp(-std::max(0.0, capacity) / 3.0);

  // Random Fourier ripple.
  constexpr int kFeatures = 16;
  std::normal_distribution<double> freq(0.0, 0.6);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  double ripple = 0.0;
  for (int r = 0; r < kFeatures; ++r) {
    double dot = 0.0;
    for (double x : phi) dot += freq(rng) * x;
    ripple += std::cos(dot + phase(rng));
  }
  ripple *= 0.02 / std::sqrt(static_cast<double>(kFeatures));

  return 0.5 + 0.45 * std::clamp(saturating + ripple, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

InferenceRun run_inference(const VirtualDevice& device, const Architecture& arch,
                           std::uint64_t run_seed, const TensorShape& input) {
  device.check();
  InferenceRun run;
  run.truth_mj = ground_truth_energy(device, arch, input, run_seed);

  double macs = 0.0;
  for (const auto& k : extract_kernels(arch, input)) macs += static_cast<double>(k.macs());
  const std::int64_t duration_us =
      std::max<std::int64_t>(1, std::llround(macs * latency_ns_per_mac(device.backend) / 1000.0)) +
      device.dispatch_overhead_us;

  Rng rng(mix_seed(mix_seed(device_seed(device), arch.id()), run_seed, 0x5eedULL));
  const std::int64_t t_start = 1'000'000 + std::uniform_int_distribution<std::int64_t>(0, 999)(rng);
  const std::int64_t t_end = t_start + duration_us;
  run.events = {{EventKind::kStart, t_start}, {EventKind::kStop, t_end}};

  const double rate = 1.0 + device.clock.drift_ppm * 1e-6;
  auto device_to_monitor = [&](double d) { return d * rate + static_cast<double>(device.clock.offset_us); };
  const std::int64_t trigger = std::llround(device_to_monitor(static_cast<double>(t_start)));
  const std::int64_t capture_begin = trigger - kCaptureGuardUs;
  const std::int64_t capture_end = std::llround(device_to_monitor(static_cast<double>(t_end))) + kCaptureGuardUs;

  const double spike_end = static_cast<double>(t_start) + 0.1 * static_cast<double>(duration_us);
  const double base_mw =
      run.truth_mj / (static_cast<double>(duration_us) / 1e6 * (1.0 + 0.1 * device.warmup_spike));
  const double period_us = 1e6 / device.sample_rate_hz;

  for (std::int64_t k = 0;; ++k) {
    const std::int64_t t = capture_begin + std::llround(static_cast<double>(k) * period_us);
    if (t > capture_end) break;
    const double d = (static_cast<double>(t) - static_cast<double>(device.clock.offset_us)) / rate;
    double power = device.idle_mw;
    if (d >= static_cast<double>(t_start) && d <= static_cast<double>(t_end)) {
      power = d < spike_end ? base_mw * (1.0 + device.warmup_spike) : base_mw;
    }
    run.trace.push_back({t, power * 1000.0 / device.supply_mv, device.supply_mv});
  }
  return run;
}

double ClockMap::to_monitor(std::int64_t device_us) const {
  return static_cast<double>(monitor_anchor_us) +
         static_cast<double>(device_us - device_anchor_us) * (1.0 + drift_ppm * 1e-6);
}

ClockMap ClockMap::from_capture(std::span<const PowerSample> trace, const InferenceEvent& start,
                                double nominal_drift_ppm, std::int64_t guard_us) {
  if (trace.empty()) throw std::runtime_error("empty power trace");
  if (start.kind != EventKind::kStart) throw std::invalid_argument("clock anchor must be a start event");
  return {start.t_us, trace.front().t_us + guard_us, nominal_drift_ppm};
}

std::span<const PowerSample> capture_window(std::span<const PowerSample> trace,
                                            std::int64_t t_start_us, std::int64_t t_end_us,
                                            const ClockMap& clock_map) {
  if (t_start_us >= t_end_us) throw std::invalid_argument("capture window needs T_s < T_e");
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].t_us <= trace[i - 1].t_us) {
      throw std::invalid_argument("power trace timestamps must be strictly increasing");
    }
  }
  const double lo = clock_map.to_monitor(t_start_us);
  const double hi = clock_map.to_monitor(t_end_us);
  const auto first = std::find_if(trace.begin(), trace.end(),
                                  [&](const PowerSample& s) { return static_cast<double>(s.t_us) > lo; });
  auto last = first;
  while (last != trace.end() && static_cast<double>(last->t_us) <= hi) ++last;
  if (first == last) throw std::runtime_error("no samples in inference window");
  return {first, last};
}

MeasurementResult compute_energy(std::span<const PowerSample> window, std::int64_t t_start_us,
                                 std::int64_t t_end_us) {
  if (window.empty()) throw std::runtime_error("no samples in inference window");
  double current = 0.0, voltage = 0.0;
  for (const auto& s : window) {
    current += s.current_ma;
    voltage += s.voltage_mv;
  }
  const auto n = static_cast<double>(window.size());
  MeasurementResult r;
  r.t_start_us = t_start_us;
  r.t_end_us = t_end_us;
  r.avg_current_ma = current / n;
  r.avg_voltage_mv = voltage / n;
  r.avg_power_mw = r.avg_current_ma * r.avg_voltage_mv * 1e-3;
  r.energy_mj = r.avg_power_mw * static_cast<double>(t_end_us - t_start_us) / 1e6;
  r.sample_count = static_cast<std::int64_t>(window.size());
  return r;
}

double integrate_energy_mj(std::span<const PowerSample> window, int sample_rate_hz) {
  double e = 0.0;
  for (const auto& s : window) e += s.current_ma * s.voltage_mv * 1e-3;
  return e / sample_rate_hz;
}

MeasurementResult measure(const VirtualDevice& device, const Architecture& arch,
                          std::uint64_t run_seed, const TensorShape& input) {
  const InferenceRun run = run_inference(device, arch, run_seed, input);
  const auto& start = run.events.front();
  const auto& stop = run.events.back();
  const ClockMap map = ClockMap::from_capture(run.trace, start, device.clock.drift_ppm);
  MeasurementResult r =
      compute_energy(capture_window(run.trace, start.t_us, stop.t_us, map), start.t_us, stop.t_us);
  r.arch_id = arch.id();

  const std::uint64_t seed = mix_seed(mix_seed(device_seed(device), arch.id()), run_seed, 0xacc0ULL);
  const double noise = relative_noise(device.accuracy_noise, seed);
  r.accuracy = std::clamp(accuracy_field(device, embed(arch)) + noise, 0.0, 1.0);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::string trimmed(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

void write_trace_csv(std::ostream& out, std::span<const PowerSample> trace) {
  out << "t_us,current_mA,voltage_mV\n";
  for (const auto& s : trace) out << fmt::format("{},{},{}\n", s.t_us, s.current_ma, s.voltage_mv);
}

std::vector<PowerSample> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trimmed(line) != "t_us,current_mA,voltage_mV") {
    throw std::invalid_argument("trace file is missing its header row");
  }
  std::vector<PowerSample> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trimmed(line);
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = a == std::string::npos ? a : line.find(',', a + 1);
    if (b == std::string::npos) throw std::invalid_argument(fmt::format("trace line {}: expected 3 fields", line_no));
    PowerSample s;
    s.t_us = std::stoll(line.substr(0, a));
    s.current_ma = std::stod(line.substr(a + 1, b - a - 1));
    s.voltage_mv = std::stod(line.substr(b + 1));
    out.push_back(s);
  }
  return out;
}

void write_events_csv(std::ostream& out, std::span<const InferenceEvent> events) {
  out << "kind,t_us\n";
  for (const auto& e : events) {
    out << (e.kind == EventKind::kStart ? "start" : "stop") << ',' << e.t_us << '\n';
  }
}

std::vector<InferenceEvent> read_events_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trimmed(line) != "kind,t_us") {
    throw std::invalid_argument("event file is missing its header row");
  }
  std::vector<InferenceEvent> out;
  while (std::getline(in, line)) {
    line = trimmed(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("malformed event line: " + line);
    const std::string kind = line.substr(0, comma);
    if (kind != "start" && kind != "stop") throw std::invalid_argument("unknown event kind: " + kind);
    out.push_back({kind == "start" ? EventKind::kStart : EventKind::kStop, std::stoll(line.substr(comma + 1))});
  }
  if (out.size() != 2 || out[0].kind != EventKind::kStart || out[1].kind != EventKind::kStop ||
      out[0].t_us >= out[1].t_us) {
    throw std::invalid_argument("event file must hold one start followed by one later stop");
  }
  return out;
}

}  // namespace hwnas
