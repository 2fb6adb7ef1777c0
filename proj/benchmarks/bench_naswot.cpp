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

#include "hwnas/naswot.hpp"

namespace {

void BM_NaswotProxy(benchmark::State& state) {
  const auto archs = hwnas::sample_space(1, 16);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(hwnas::naswot_proxy(archs[i]));
    i = (i + 1) % archs.size();
  }
}
BENCHMARK(BM_NaswotProxy)->Unit(benchmark::kMillisecond);

void BM_CodeKernel(benchmark::State& state) {
  const hwnas::TinyNet net = hwnas::instantiate(hwnas::sample_space(2, 1).front(), 1);
  const auto codes = hwnas::activation_codes(net, hwnas::make_probe(hwnas::kProbeBatch, hwnas::kProbeShape, 2));
  for (auto _ : state) benchmark::DoNotOptimize(hwnas::naswot_score(codes));
}
BENCHMARK(BM_CodeKernel);

}  // namespace

BENCHMARK_MAIN();
