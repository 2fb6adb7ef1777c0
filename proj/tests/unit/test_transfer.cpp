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
#include <map>

#include "hwnas/device_harness.hpp"
#include "hwnas/seed.hpp"
#include "hwnas/transfer.hpp"
#include "oracles.hpp"

using namespace hwnas;

namespace {

VirtualDevice device(const std::string& id, double scale = 1.0, double static_mj = 0.0) {
  VirtualDevice d;
  d.device_id = id;
  d.noise_sigma = 0.01;
  d.coeffs.scale = scale;
  d.coeffs.static_mj = static_mj;
  return d;
}

PredictorModel trained_on(const VirtualDevice& d, std::uint64_t seed, int epochs = 150) {
  TrainConfig tc;
  tc.max_epochs = epochs;
  return train_predictor(measure_kernels(d, generate_configs(seed, 400), 1), tc);
}

std::vector<KernelConfig> mixed_pool(std::size_t n, std::uint64_t seed) {
  ConfigRanges r;
  r.patterns = {KernelPattern::kConvBnRelu, KernelPattern::kDwConvBnRelu, KernelPattern::kAvgPool};
  return generate_configs(seed, n, r);
}

}  // namespace

TEST(Kl, IdenticalListsGiveZero) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(kl_divergence(v, v), 0.0);
  const std::vector<double> flat{2, 2, 2};
  EXPECT_DOUBLE_EQ(kl_divergence(flat, flat), 0.0);
}

TEST(Kl, TwoBinHandValue) {
  // p counts (2, 2), q counts (1, 3) over [0, 1] split at 0.5.
  const std::vector<double> p{0.0, 0.1, 0.9, 1.0};
  const std::vector<double> q{0.0, 0.9, 0.95, 1.0};
  const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  EXPECT_NEAR(kl_divergence(p, q, 2), expected, 1e-8);
  EXPECT_NEAR(kl_divergence(p, q, 2), 0.1438, 1e-4);
}

TEST(Kl, NonNegativeAndMatchesOracle) {
  Rng rng(17);
  std::lognormal_distribution<double> dist(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(50), q(70);
    for (auto& x : p) x = dist(rng);
    for (auto& x : q) x = 1.5 * dist(rng);
    const double kl = kl_divergence(p, q);
    EXPECT_GE(kl, 0.0);
    EXPECT_NEAR(kl, oracle::histogram_kl(p, q, kKlBins), 1e-9 * std::max(1.0, kl));
  }
}

TEST(Kl, Errors) {
  EXPECT_THROW(kl_divergence(std::vector<double>{1}, std::vector<double>{1, 2}), std::invalid_argument);
  EXPECT_THROW(kl_divergence(std::vector<double>{1, 2}, std::vector<double>{1, 2}, 1), std::invalid_argument);
}

TEST(Calibration, ConvShareAndKernelSizeBalance) {
  const auto plan = select_calibration_set(mixed_pool(2000, 3), 100, 5);
  ASSERT_EQ(plan.configs.size(), 100u);
  std::map<int, int> ks;
  int conv = 0;
  for (const auto& c : plan.configs) {
    if (is_conv_family(c.pattern)) {
      ++conv;
      ++ks[c.kernel_size];
    }
  }
  EXPECT_GE(conv, 70);
  ASSERT_EQ(ks.size(), 4u);
  for (const auto& [k, n] : ks) EXPECT_GE(n, 17) << "KS " << k;
  int lo = 1000, hi = 0;
  for (const auto& [k, n] : ks) lo = std::min(lo, n), hi = std::max(hi, n);
  EXPECT_LE(hi - lo, 1);
}

TEST(Calibration, MinimalBudgetCoversEveryKernelSize) {
  const auto plan = select_calibration_set(mixed_pool(200, 4), 8, 1);
  ASSERT_EQ(plan.configs.size(), 8u);
  std::map<int, int> ks;
  for (const auto& c : plan.configs) {
    if (is_conv_family(c.pattern)) ++ks[c.kernel_size];
  }
  EXPECT_EQ(ks.size(), 4u);
}

TEST(Calibration, DeterministicAndChecked) {
  const auto pool = mixed_pool(500, 6);
  EXPECT_EQ(select_calibration_set(pool, 60, 2).configs, select_calibration_set(pool, 60, 2).configs);
  EXPECT_THROW(select_calibration_set(pool, 501, 2), std::invalid_argument);
  EXPECT_THROW(select_calibration_set(pool, 7, 2), std::invalid_argument);
}

class Zoo : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    gen_ = new PredictorModel(trained_on(device("gen"), 11));
    scaled_ = new PredictorModel(trained_on(device("scaled", 3.0), 12));
  }
  static void TearDownTestSuite() {
    delete gen_;
    delete scaled_;
  }
  static PredictorModel* gen_;
  static PredictorModel* scaled_;
};
PredictorModel* Zoo::gen_ = nullptr;
PredictorModel* Zoo::scaled_ = nullptr;

TEST_F(Zoo, PicksTheGenerator) {
  PredictorZoo zoo;
  zoo.add(*scaled_);
  zoo.add(*gen_);
  const auto measured = measure_kernels(device("gen"), generate_configs(40, 100), 3);
  std::vector<KlEntry> table;
  EXPECT_EQ(select_base_predictor(zoo, measured, &table).device_id, "gen");
  ASSERT_EQ(table.size(), 2u);
  const auto& g = table[0].device_id == "gen" ? table[0] : table[1];
  const auto& s = table[0].device_id == "gen" ? table[1] : table[0];
  EXPECT_LT(g.kl, s.kl);
}

TEST_F(Zoo, SingleEntryAndTieRule) {
  const auto measured = measure_kernels(device("gen"), generate_configs(41, 60), 3);
  PredictorZoo one;
  one.add(*scaled_);
  EXPECT_EQ(select_base_predictor(one, measured).device_id, "scaled");

  PredictorZoo twins;
  PredictorModel b = *gen_, a = *gen_;
  b.device_id = "b-twin";
  a.device_id = "a-twin";
  twins.add(b);
  twins.add(a);
  EXPECT_EQ(select_base_predictor(twins, measured).device_id, "a-twin");
}

TEST_F(Zoo, Errors) {
  PredictorZoo zoo;
  EXPECT_THROW(select_base_predictor(zoo, measure_kernels(device("gen"), generate_configs(1, 40), 1)),
               std::invalid_argument);
  zoo.add(*gen_);
  EXPECT_THROW(zoo.add(*gen_), std::invalid_argument);
  auto gpu = measure_kernels(device("gen"), generate_configs(1, 40), 1);
  for (auto& s : gpu) s.backend = Backend::kGpu;
  EXPECT_THROW(select_base_predictor(zoo, gpu), std::invalid_argument);
}

TEST_F(Zoo, FineTuneIsDeterministic) {
  const auto samples = measure_kernels(device("B", 1.4, 5.0), generate_configs(50, 100), 2);
  FineTuneConfig fc;
  fc.max_epochs = 60;
  EXPECT_EQ(fine_tune(*gen_, samples, fc), fine_tune(*gen_, samples, fc));
}

TEST_F(Zoo, FineTuneNeverRaisesTrainingError) {
  for (std::uint64_t seed : {51u, 52u, 53u}) {
    const auto samples = measure_kernels(device("gen"), generate_configs(seed, 100), 2);
    FineTuneConfig fc;
    fc.max_epochs = 100;
    const auto tuned = fine_tune(*gen_, samples, fc);
    EXPECT_LE(evaluate(tuned, samples).rmse_mj, evaluate(*gen_, samples).rmse_mj);
  }
}

TEST_F(Zoo, FineTuneFollowsAnAffineShift) {
  const VirtualDevice b = device("B", 1.4, 5.0);
  const auto samples = measure_kernels(b, generate_configs(53, 100), 2);
  const auto held = measure_kernels(b, generate_configs(54, 200), 4);
  const auto tuned = fine_tune(*gen_, samples);
  EXPECT_LT(evaluate(tuned, held).rmse_mj, evaluate(*gen_, held).rmse_mj);
}

TEST_F(Zoo, FineTuneSampleBounds) {
  const auto few = measure_kernels(device("gen"), generate_configs(55, 29), 2);
  EXPECT_THROW(fine_tune(*gen_, few), std::invalid_argument);
  const auto many = measure_kernels(device("gen"), generate_configs(56, 1001), 2);
  EXPECT_THROW(fine_tune(*gen_, many), std::invalid_argument);
}

TEST_F(Zoo, FineTuneRejectsLayoutMismatch) {
  PredictorModel odd = *gen_;
  odd.feature_layout = "something else";
  const auto samples = measure_kernels(device("gen"), generate_configs(57, 40), 2);
  EXPECT_THROW(fine_tune(odd, samples), std::invalid_argument);
}
