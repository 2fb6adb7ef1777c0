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

#include <random>

#include "hwnas/pareto.hpp"
#include "hwnas/seed.hpp"

namespace {

void BM_ParetoIndices(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  hwnas::Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Eigen::VectorXd> pts(n);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = Eigen::Vector2d(u(rng), u(rng));
    ids[i] = std::to_string(i);
  }
  for (auto _ : state) benchmark::DoNotOptimize(hwnas::pareto_indices(pts, ids));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ParetoIndices)->RangeMultiplier(10)->Range(10, 10000)->Complexity();

void BM_MinNorm(benchmark::State& state) {
  const auto m = state.range(0);
  hwnas::Rng rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd grads(m, 16);
  for (Eigen::Index i = 0; i < grads.size(); ++i) grads.data()[i] = g(rng);
  const Eigen::VectorXd ws = Eigen::VectorXd::Ones(m);
  for (auto _ : state) benchmark::DoNotOptimize(hwnas::min_norm_direction(grads, ws));
}
BENCHMARK(BM_MinNorm)->DenseRange(2, 4);

}  // namespace

BENCHMARK_MAIN();
