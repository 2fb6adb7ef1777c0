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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hwnas/arch_space.hpp"
#include "hwnas/kernel_energy.hpp"

namespace hwnas {

struct EnergyCoefficients {
  double mj_per_mac = 1e-5;
  double mj_per_byte = 1e-4;
  /// Fixed per-kernel overhead (launch, sync); zero for the reference device.
  double static_mj = 0.0;
  /// Multiplies the dynamic (MAC + byte) term.
  double scale = 1.0;
};

struct ClockModel {
  std::int64_t offset_us = 0;  // monitor minus device at device time zero
  double drift_ppm = 0.0;      // monitor clock rate error
};

/// Stand-in for a handset plus external power monitor.
struct VirtualDevice {
  std::string device_id = "virtual-cpu";
  Backend backend = Backend::kCpu;
  EnergyCoefficients coeffs;
  double noise_sigma = 0.0;  // relative energy noise
  ClockModel clock;
  int sample_rate_hz = 5000;
  std::uint64_t seed = 1;  // drives the hidden accuracy field and noise
  double accuracy_noise = 0.002;
  double supply_mv = 4000.0;
  double idle_mw = 150.0;
  /// Relative power excess over the first 10% of an inference.
  double warmup_spike = 0.1;
  std::int64_t dispatch_overhead_us = 1000;

  void check() const;
};

/// Nanoseconds of simulated compute per MAC.
double latency_ns_per_mac(Backend backend);

/// Noise-free per-kernel energy in mJ.
double kernel_energy_mj(const VirtualDevice& device, const KernelConfig& kernel);

/// Noisy kernel micro-benchmark, deterministic per (device, kernel, run_seed).
double measure_kernel_mj(const VirtualDevice& device, const KernelConfig& kernel,
                         std::uint64_t run_seed);
std::vector<EnergySample> measure_kernels(const VirtualDevice& device,
                                          std::span<const KernelConfig> kernels,
                                          std::uint64_t run_seed);

/// Σ kernel energies × (1 + η), η ~ N(0, noise_sigma) seeded by
/// (device, arch, run_seed).
double ground_truth_energy(const VirtualDevice& device, const Architecture& arch,
                           const TensorShape& input, std::uint64_t run_seed);

/// Hidden smooth accuracy function of the embedding, in [0.5, 0.95].
double accuracy_field(const VirtualDevice& device, const ArchEmbedding& embedding);

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

struct PowerSample {
  std::int64_t t_us = 0;  // monitor clock
  double current_ma = 0.0;
  double voltage_mv = 0.0;
  bool operator==(const PowerSample&) const = default;
};

enum class EventKind : std::uint8_t { kStart, kStop };

struct InferenceEvent {
  EventKind kind = EventKind::kStart;
  std::int64_t t_us = 0;  // device clock
  bool operator==(const InferenceEvent&) const = default;
};

inline constexpr std::int64_t kCaptureGuardUs = 5000;

struct InferenceRun {
  std::vector<InferenceEvent> events;  // start, stop
  std::vector<PowerSample> trace;      // begins kCaptureGuardUs before the start trigger
  double truth_mj = 0.0;
};

InferenceRun run_inference(const VirtualDevice& device, const Architecture& arch,
                           std::uint64_t run_seed, const TensorShape& input = kDefaultInput);

/// Device-to-monitor time map anchored on the start event.
struct ClockMap {
  std::int64_t device_anchor_us = 0;
  std::int64_t monitor_anchor_us = 0;
  double drift_ppm = 0.0;

  double to_monitor(std::int64_t device_us) const;

  static ClockMap identity() { return {}; }
  /// Capture starts kCaptureGuardUs before the monitor sees the start
  /// trigger, so the trace's first timestamp fixes the anchor.
  static ClockMap from_capture(std::span<const PowerSample> trace, const InferenceEvent& start,
                               double nominal_drift_ppm, std::int64_t guard_us = kCaptureGuardUs);
};

/// Samples from the first one strictly after T_s (mapped) through the last
/// at or before T_e (mapped). Throws std::runtime_error("no samples in
/// inference window") when empty.
std::span<const PowerSample> capture_window(std::span<const PowerSample> trace,
                                            std::int64_t t_start_us, std::int64_t t_end_us,
                                            const ClockMap& clock_map);

struct MeasurementResult {
  std::string arch_id;
  std::int64_t t_start_us = 0;
  std::int64_t t_end_us = 0;
  double avg_current_ma = 0.0;
  double avg_voltage_mv = 0.0;
  double avg_power_mw = 0.0;
  double energy_mj = 0.0;
  std::int64_t sample_count = 0;
  double accuracy = 0.0;
};

/// P = mean(I) · mean(V), E = P · (T_e - T_s).
MeasurementResult compute_energy(std::span<const PowerSample> window, std::int64_t t_start_us,
                                 std::int64_t t_end_us);

/// Σ I·V·δt over the window, δt the sample period; a diagnostic only.
double integrate_energy_mj(std::span<const PowerSample> window, int sample_rate_hz);

MeasurementResult measure(const VirtualDevice& device, const Architecture& arch,
                          std::uint64_t run_seed, const TensorShape& input = kDefaultInput);

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

void write_trace_csv(std::ostream& out, std::span<const PowerSample> trace);
std::vector<PowerSample> read_trace_csv(std::istream& in);
void write_events_csv(std::ostream& out, std::span<const InferenceEvent> events);
std::vector<InferenceEvent> read_events_csv(std::istream& in);

}  // namespace hwnas
