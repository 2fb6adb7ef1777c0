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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hwnas/device_harness.hpp"

using namespace hwnas;

namespace {

std::vector<PowerSample> samples_at(std::initializer_list<std::int64_t> ts, double ma = 100.0) {
  std::vector<PowerSample> out;
  for (auto t : ts) out.push_back({t, ma, 4000.0});
  return out;
}

Architecture cell_with(std::initializer_list<OpKind> ops) {
  CellTopology c;
  std::size_t i = 0;
  for (const auto& op : ops) c.edge_ops[i++] = op;
  return Architecture(c);
}

const Architecture kMixed =
    cell_with({Conv{3, 0, 1}, Skip{}, Conv{1, 0, 1}, Zeroize{}, AvgPool3x3{}, Skip{}});

}  // namespace

TEST(KernelEnergy, HandExample) {
  // 5x5 input, 20 -> 80 channels, 5x5 kernel: 10^6 MACs and 10^4 bytes.
  const KernelConfig k{KernelPattern::kConvBnRelu, 5, 5, 20, 80, 5, 1};
  ASSERT_EQ(k.macs(), 1'000'000);
  ASSERT_EQ(k.input_bytes() + k.output_bytes(), 10'000);
  VirtualDevice d;
  d.coeffs.mj_per_mac = 1e-6;
  d.coeffs.mj_per_byte = 1e-5;
  EXPECT_NEAR(kernel_energy_mj(d, k), 1.1, 1e-12);
}

TEST(KernelEnergy, StaticAndScaleTerms) {
  const KernelConfig k{KernelPattern::kConvBnRelu, 5, 5, 20, 80, 5, 1};
  VirtualDevice d;
  d.coeffs.mj_per_mac = 1e-6;
  d.coeffs.mj_per_byte = 1e-5;
  d.coeffs.scale = 1.4;
  d.coeffs.static_mj = 5.0;
  EXPECT_NEAR(kernel_energy_mj(d, k), 1.4 * 1.1 + 5.0, 1e-12);
}

TEST(GroundTruth, SumsKernelsWithoutNoise) {
  VirtualDevice d;
  double sum = 0.0;
  for (const auto& k : extract_kernels(kMixed)) sum += kernel_energy_mj(d, k);
  EXPECT_NEAR(ground_truth_energy(d, kMixed, kDefaultInput, 3), sum, 1e-9 * sum);
  EXPECT_EQ(ground_truth_energy(d, kMixed, kDefaultInput, 3), ground_truth_energy(d, kMixed, kDefaultInput, 3));
}

TEST(GroundTruth, NoiseIsSeeded) {
  VirtualDevice d;
  d.noise_sigma = 0.05;
  const double a = ground_truth_energy(d, kMixed, kDefaultInput, 1);
  EXPECT_EQ(a, ground_truth_energy(d, kMixed, kDefaultInput, 1));
  EXPECT_NE(a, ground_truth_energy(d, kMixed, kDefaultInput, 2));
}

TEST(Accuracy, FieldIsBoundedAndSeeded) {
  VirtualDevice a, b;
  b.seed = 2;
  const auto e = embed(kMixed);
  const double x = accuracy_field(a, e);
  EXPECT_GE(x, 0.5);
  EXPECT_LE(x, 0.95);
  EXPECT_EQ(x, accuracy_field(a, e));
  EXPECT_NE(x, accuracy_field(b, e));
}

TEST(CaptureWindow, RuleApplication) {
  const auto trace = samples_at({900, 1100, 1300});
  const auto w = capture_window(trace, 1000, 1300, ClockMap::identity());
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].t_us, 1100);
  EXPECT_EQ(w[1].t_us, 1300);
}

TEST(CaptureWindow, EmptyWindowThrows) {
  const auto trace = samples_at({900, 1100, 1300});
  try {
    capture_window(trace, 100, 800, ClockMap::identity());
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "no samples in inference window");
  }
  EXPECT_THROW(capture_window(trace, 1000, 1000, ClockMap::identity()), std::invalid_argument);
  const auto bad = samples_at({900, 900});
  EXPECT_THROW(capture_window(bad, 0, 2000, ClockMap::identity()), std::invalid_argument);
}

TEST(CaptureWindow, WholeTraceInside) {
  const auto trace = samples_at({900, 1100, 1300});
  EXPECT_EQ(capture_window(trace, 0, 5000, ClockMap::identity()).size(), 3u);
}

TEST(CaptureWindow, ClockMapShiftsTheWindow) {
  const auto trace = samples_at({2900, 3100, 3300});
  const ClockMap map{1000, 3000, 0.0};
  const auto w = capture_window(trace, 1000, 1300, map);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].t_us, 3100);
  EXPECT_DOUBLE_EQ(map.to_monitor(2000), 4000.0);
  const ClockMap fast{0, 0, 200.0};
  EXPECT_DOUBLE_EQ(fast.to_monitor(1'000'000), 1'000'200.0);
}

TEST(ComputeEnergy, ConstantPower) {
  std::vector<PowerSample> w;
  for (int i = 0; i < 50; ++i) w.push_back({i * 200, 500.0, 4000.0});
  const auto r = compute_energy(w, 0, 10'000);
  EXPECT_DOUBLE_EQ(r.avg_power_mw, 2000.0);
  EXPECT_DOUBLE_EQ(r.energy_mj, 20.0);
  EXPECT_EQ(r.sample_count, 50);
}

TEST(ComputeEnergy, SingleAndMean) {
  const auto one = compute_energy(samples_at({5}, 250.0), 0, 1000);
  EXPECT_DOUBLE_EQ(one.avg_power_mw, 250.0 * 4000.0 * 1e-3);
  std::vector<PowerSample> two{{0, 400.0, 4000.0}, {1, 600.0, 4000.0}};
  EXPECT_DOUBLE_EQ(compute_energy(two, 0, 10).avg_current_ma, 500.0);
  EXPECT_THROW(compute_energy(std::vector<PowerSample>{}, 0, 1), std::runtime_error);
}

TEST(Inference, TenMillisecondsAtFiveKilohertz) {
  // Tune the dispatch overhead so the run lasts 10 ms with idle compute.
  CellTopology c;
  c.edge_ops.fill(Skip{});
  const Architecture a(c);
  VirtualDevice d;
  d.dispatch_overhead_us = 0;
  double macs = 0.0;
  for (const auto& k : extract_kernels(a)) macs += static_cast<double>(k.macs());
  d.dispatch_overhead_us = 10'000 - std::llround(macs * latency_ns_per_mac(d.backend) / 1000.0);
  ASSERT_GT(d.dispatch_overhead_us, 0);
  const auto run = run_inference(d, a, 1);
  ASSERT_EQ(run.events.size(), 2u);
  EXPECT_EQ(run.events[1].t_us - run.events[0].t_us, 10'000);
  const ClockMap map = ClockMap::from_capture(run.trace, run.events[0], 0.0);
  const auto w = capture_window(run.trace, run.events[0].t_us, run.events[1].t_us, map);
  EXPECT_GE(w.size(), 50u);
}

TEST(Inference, MonitorOffset) {
  VirtualDevice d;
  d.clock.offset_us = 2000;
  const auto run = run_inference(d, kMixed, 4);
  const std::int64_t trigger = run.trace.front().t_us + kCaptureGuardUs;
  EXPECT_EQ(trigger - run.events[0].t_us, 2000);
}

TEST(Inference, TraceIntegralMatchesTruth) {
  VirtualDevice d;
  const auto run = run_inference(d, kMixed, 7);
  const auto map = ClockMap::from_capture(run.trace, run.events[0], 0.0);
  const auto w = capture_window(run.trace, run.events[0].t_us, run.events[1].t_us, map);
  double e = 0.0;
  for (const auto& s : w) e += s.current_ma * s.voltage_mv * 1e-3 / d.sample_rate_hz;
  EXPECT_NEAR(e, run.truth_mj, 0.005 * run.truth_mj);
  EXPECT_NEAR(integrate_energy_mj(w, d.sample_rate_hz), e, 1e-9 * e);
}

TEST(Measure, RecoversTruthWithoutDrift) {
  VirtualDevice d;
  const auto m = measure(d, kMixed, 3);
  const double truth = ground_truth_energy(d, kMixed, kDefaultInput, 3);
  EXPECT_LE(std::abs(m.energy_mj - truth) / truth, 0.005);
  EXPECT_EQ(m.arch_id, kMixed.id());
}

TEST(Measure, DriftStaysWithinOnePercent) {
  for (double ppm : {-200.0, 200.0}) {
    for (std::int64_t offset : {-2000, 0, 2000}) {
      VirtualDevice d;
      d.clock = {offset, ppm};
      const auto m = measure(d, kMixed, 3);
      const double truth = ground_truth_energy(d, kMixed, kDefaultInput, 3);
      EXPECT_LE(std::abs(m.energy_mj - truth) / truth, 0.01) << ppm << " " << offset;
    }
  }
}

TEST(Measure, Deterministic) {
  VirtualDevice d;
  d.noise_sigma = 0.02;
  const auto a = measure(d, kMixed, 9), b = measure(d, kMixed, 9);
  EXPECT_EQ(a.energy_mj, b.energy_mj);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_GE(a.accuracy, 0.0);
  EXPECT_LE(a.accuracy, 1.0);
}

TEST(Device, ChecksParameters) {
  VirtualDevice d;
  EXPECT_NO_THROW(d.check());
  d.sample_rate_hz = 10;
  EXPECT_THROW(d.check(), std::invalid_argument);
  d = VirtualDevice{};
  d.coeffs.mj_per_mac = 0.0;
  EXPECT_THROW(d.check(), std::invalid_argument);
}

TEST(Files, TraceAndEventsRoundTrip) {
  VirtualDevice d;
  const auto run = run_inference(d, kMixed, 2);
  std::stringstream t, e;
  write_trace_csv(t, run.trace);
  write_events_csv(e, run.events);
  const auto trace = read_trace_csv(t);
  ASSERT_EQ(trace.size(), run.trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_EQ(trace[i].t_us, run.trace[i].t_us);
    EXPECT_DOUBLE_EQ(trace[i].current_ma, run.trace[i].current_ma);
  }
  EXPECT_EQ(read_events_csv(e), run.events);
}

TEST(Files, RejectMalformedInput) {
  std::stringstream no_header("1,2,3\n");
  EXPECT_THROW(read_trace_csv(no_header), std::invalid_argument);
  std::stringstream short_line("t_us,current_mA,voltage_mV\n1,2\n");
  EXPECT_THROW(read_trace_csv(short_line), std::invalid_argument);
  std::stringstream reversed("kind,t_us\nstop,5\nstart,9\n");
  EXPECT_THROW(read_events_csv(reversed), std::invalid_argument);
}
