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

#include <benchmark/benchmark.h>

#include "hwnas/device_harness.hpp"
#include "hwnas/kernel_energy.hpp"

namespace {

const hwnas::PredictorModel& model() {
  static const hwnas::PredictorModel m = [] {
    hwnas::VirtualDevice d;
    hwnas::TrainConfig tc;
    tc.max_epochs = 50;
    return hwnas::train_predictor(hwnas::measure_kernels(d, hwnas::generate_configs(1, 400), 1), tc);
  }();
  return m;
}

void BM_PredictKernel(benchmark::State& state) {
  const auto configs = hwnas::generate_configs(2, 256);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hwnas::predict_kernel(model(), configs[i]));
    i = (i + 1) % configs.size();
  }
}
BENCHMARK(BM_PredictKernel);

void BM_PredictArchitecture(benchmark::State& state) {
  const auto archs = hwnas::sample_space(3, 32);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hwnas::predict_model_energy(model(), archs[i]));
    i = (i + 1) % archs.size();
  }
}
BENCHMARK(BM_PredictArchitecture);

void BM_MeasureArchitecture(benchmark::State& state) {
  const auto archs = hwnas::sample_space(4, 32);
  hwnas::VirtualDevice d;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hwnas::measure(d, archs[i], i));
    i = (i + 1) % archs.size();
  }
}
BENCHMARK(BM_MeasureArchitecture);

}  // namespace

BENCHMARK_MAIN();
