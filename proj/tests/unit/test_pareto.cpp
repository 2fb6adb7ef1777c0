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
#include <numbers>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "hwnas/pareto.hpp"
#include "hwnas/seed.hpp"
#include "oracles.hpp"

using namespace hwnas;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

FrontEntry entry(const std::string& id, double f1, double f2) {
  FrontEntry e;
  e.arch_id = id;
  e.f = Vector2d(f1, f2);
  e.embedding = Vector2d(f1, f2);
  return e;
}

GradientEstimate grad(const std::string& anchor, Vector2d energy_row, Vector2d accuracy_row) {
  GradientEstimate g;
  g.anchor = anchor;
  g.g.resize(2, 2);
  g.g.row(0) = energy_row.transpose();
  g.g.row(1) = accuracy_row.transpose();
  return g;
}

Candidate cand(const std::string& id, VectorXd v) { return {id, std::move(v)}; }

}  // namespace

TEST(Normalize, EnergyExamples) {
  EXPECT_EQ(normalize_energy(std::vector<double>{2, 4, 6}), (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(normalize_energy(std::vector<double>{5, 5, 5}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(normalize_energy(std::vector<double>{3}), (std::vector<double>{0}));
  EXPECT_THROW(normalize_energy(std::vector<double>{}), std::invalid_argument);
}

TEST(Normalize, ScoreExamples) {
  const double e = std::numbers::e;
  const auto a = normalize_score(std::vector<double>{e, e * e});
  EXPECT_NEAR(a[0], 1.0, 1e-12);
  EXPECT_NEAR(a[1], 2.0, 1e-12);
  const auto b = normalize_score(std::vector<double>{e, -std::numeric_limits<double>::infinity()});
  EXPECT_NEAR(b[0], 1.0, 1e-12);
  EXPECT_NEAR(b[1], 0.0, 1e-12);
  EXPECT_EQ(normalize_score(std::vector<double>{1.0}), (std::vector<double>{0.0}));
  EXPECT_EQ(normalize_score(std::vector<double>{-3.0}), (std::vector<double>{-1.0}));
}

TEST(Normalize, FrozenScaleKeepsMeaning) {
  const MinMaxScale s = MinMaxScale::fit(std::vector<double>{10, 20});
  EXPECT_DOUBLE_EQ(s.apply(15), 0.5);
  EXPECT_DOUBLE_EQ(s.apply(30), 2.0);
  EXPECT_DOUBLE_EQ(MinMaxScale::fit(std::vector<double>{4, 4}).apply(9), 0.0);
}

TEST(Dominance, Examples) {
  EXPECT_TRUE(dominates(Vector2d(1, 1), Vector2d(2, 2)));
  EXPECT_FALSE(dominates(Vector2d(1, 2), Vector2d(2, 1)));
  EXPECT_FALSE(dominates(Vector2d(2, 1), Vector2d(1, 2)));
  EXPECT_FALSE(dominates(Vector2d(1, 1), Vector2d(1, 1)));
  EXPECT_TRUE(dominates(Vector2d(1, 1), Vector2d(1, 2)));
  EXPECT_THROW(dominates(Vector2d(1, 1), Eigen::Vector3d(1, 1, 1)), std::invalid_argument);
}

TEST(Front, HandExample) {
  const std::vector<FrontEntry> pts{entry("a", 1, 3), entry("b", 2, 2), entry("c", 3, 1), entry("d", 3, 3)};
  const auto front = pareto_front(pts);
  ASSERT_EQ(front.size(), 3u);
  EXPECT_EQ(front[0].arch_id, "a");
  EXPECT_EQ(front[1].arch_id, "b");
  EXPECT_EQ(front[2].arch_id, "c");
}

TEST(Front, SingleAndDuplicates) {
  EXPECT_EQ(pareto_front(std::vector<FrontEntry>{entry("x", 5, 5)}).size(), 1u);
  const auto dup = pareto_front(std::vector<FrontEntry>{entry("y", 1, 1), entry("x", 1, 1), entry("z", 2, 2)});
  ASSERT_EQ(dup.size(), 2u);
  EXPECT_EQ(dup[0].arch_id, "x");
  EXPECT_EQ(dup[1].arch_id, "y");
  EXPECT_TRUE(pareto_front(std::vector<FrontEntry>{}).empty());
}

TEST(Front, MatchesBruteForce) {
  Rng rng(5);
  std::uniform_int_distribution<int> coarse(0, 30);  // plenty of ties
  std::uniform_real_distribution<double> fine(0.0, 1.0);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = t % 2 ? 200 : 25;
    const int dims = t % 5 == 4 ? 3 : 2;
    std::vector<VectorXd> pts;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      VectorXd p(dims);
      for (int d = 0; d < dims; ++d) p[d] = t % 3 ? coarse(rng) : fine(rng);
      pts.push_back(p);
      ids.push_back(fmt::format("p{:04}", (i * 7919) % 10000));
    }
    EXPECT_EQ(pareto_indices(pts, ids), oracle::brute_force_front(pts, ids)) << "trial " << t;
  }
}

TEST(Hypervolume, MatchesUnionOfBoxes) {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.2);
  for (int t = 0; t < 50; ++t) {
    std::vector<VectorXd> pts;
    for (int i = 0; i < 30; ++i) pts.push_back(Vector2d(u(rng), u(rng)));
    const Vector2d ref(1.1, 1.1);
    EXPECT_NEAR(hypervolume_2d(pts, ref), oracle::union_area(pts, ref), 1e-12);
  }
  EXPECT_DOUBLE_EQ(hypervolume_2d(std::vector<VectorXd>{Vector2d(0, 0)}, Vector2d(1, 2)), 2.0);
  EXPECT_DOUBLE_EQ(hypervolume_2d(std::vector<VectorXd>{Vector2d(3, 0)}, Vector2d(1, 2)), 0.0);
}

TEST(Gradients, RecoverLinearField) {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  const int d = 6;
  VectorXd w1(d), w2(d);
  for (int i = 0; i < d; ++i) w1[i] = n(rng), w2[i] = n(rng);
  FrontEntry anchor;
  anchor.arch_id = "anchor";
  anchor.embedding = VectorXd::Zero(d);
  anchor.f = Vector2d(0.7, -0.2);
  std::vector<FrontEntry> nb;
  for (int k = 0; k < 20; ++k) {
    FrontEntry e;
    e.arch_id = fmt::format("n{}", k);
    e.embedding = VectorXd(d);
    for (int i = 0; i < d; ++i) e.embedding[i] = n(rng);
    e.f = Vector2d(w1.dot(e.embedding) + 0.7, w2.dot(e.embedding) - 0.2);
    nb.push_back(e);
  }
  const auto est = estimate_gradients(anchor, nb, 0.0);
  EXPECT_LE((est.g.row(0).transpose() - w1).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE((est.g.row(1).transpose() - w2).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(est.neighbor_count, 20);

  // Constant objective: zero row; duplicate input: identical estimate.
  for (auto& e : nb) e.f[0] = anchor.f[0];
  const auto flat = estimate_gradients(anchor, nb, 1e-3);
  EXPECT_LE(flat.g.row(0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(estimate_gradients(anchor, nb, 1e-3).g, flat.g);

  nb.resize(2);
  try {
    estimate_gradients(anchor, nb, 1e-3);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "insufficient neighborhood");
  }
}

TEST(Gradients, NeighborsExcludeAnchorAndBreakTiesById) {
  std::vector<FrontEntry> pool{entry("self", 0, 0), entry("b", 1, 0), entry("a", 0, 1), entry("c", 5, 5)};
  const auto nn = nearest_neighbors(pool[0], pool, 2);
  ASSERT_EQ(nn.size(), 2u);
  EXPECT_EQ(nn[0].arch_id, "a");
  EXPECT_EQ(nn[1].arch_id, "b");
}

TEST(MinNorm, OrthogonalPair) {
  Eigen::MatrixXd g(2, 2);
  g << 1, 0, 0, 1;
  const auto r = min_norm_direction(g, Vector2d(1, 1));
  EXPECT_NEAR(r.lambda[0], 0.5, 1e-12);
  EXPECT_NEAR(r.g_star[0], 0.5, 1e-12);
  EXPECT_NEAR(r.g_star[1], 0.5, 1e-12);
  EXPECT_FALSE(r.converged);
}

TEST(MinNorm, EqualAndOpposedGradients) {
  Eigen::MatrixXd same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  const auto a = min_norm_direction(same, Vector2d(1, 1));
  EXPECT_LE((a.g_star - same.row(0).transpose()).norm(), 1e-12);

  Eigen::MatrixXd opposed(2, 3);
  opposed << 1, 2, 3, -1, -2, -3;
  const auto b = min_norm_direction(opposed, Vector2d(1, 1));
  EXPECT_TRUE(b.converged);
  EXPECT_EQ(b.g_star, VectorXd::Zero(3));
}

TEST(MinNorm, ClosedFormAgreement) {
  Rng rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    const int d = 2 + t % 7;
    Eigen::MatrixXd g(2, d);
    for (int i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
    const auto r = min_norm_direction(g, Vector2d(1, 1));
    const double l = oracle::two_objective_lambda(g.row(0).transpose(), g.row(1).transpose());
    EXPECT_NEAR(r.lambda[0], l, 1e-6);
    const double norm = (l * g.row(0) + (1 - l) * g.row(1)).norm();
    EXPECT_NEAR(r.norm, norm, 1e-6);
  }
}

TEST(MinNorm, SimplexGridAgreement) {
  Rng rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 6; ++t) {
    Eigen::MatrixXd g(3, 4);
    for (int i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
    const auto r = min_norm_direction(g, Eigen::Vector3d(1, 1, 1));
    EXPECT_NEAR(r.norm, oracle::simplex_grid_min_norm(g, 1000), 1e-3);
  }
}

TEST(MinNorm, WeightsScaleLambda) {
  Eigen::MatrixXd g(2, 2);
  g << 1, 0, 0, 1;
  const auto r = min_norm_direction(g, Vector2d(3, 1));
  EXPECT_NEAR(r.lambda_scaled[0], 0.75, 1e-12);
  EXPECT_NEAR(r.g_star[0], 0.75, 1e-12);
  EXPECT_NEAR(r.g_star[1], 0.25, 1e-12);
  EXPECT_THROW(min_norm_direction(g, Vector2d(0, 1)), std::invalid_argument);
  EXPECT_THROW(min_norm_direction(g, Eigen::Vector3d(1, 1, 1)), std::invalid_argument);
}

TEST(Ranking, AlongDescentBeatsOrthogonal) {
  const AnchorDirection a{"anchor", Vector2d(0, 0), Vector2d(1, 0), Vector2d(0.5, 0.5), false};
  const std::vector<AnchorDirection> anchors{a};
  const auto along = alignment_score(cand("along", Vector2d(-2, 0)), anchors);
  ASSERT_TRUE(along);
  EXPECT_NEAR(*along, a.g_star.norm(), 1e-12);
  EXPECT_NEAR(*alignment_score(cand("side", Vector2d(0, 3)), anchors), 0.0, 1e-12);
  EXPECT_FALSE(alignment_score(cand("same", Vector2d(0, 0)), anchors));

  const std::vector<Candidate> pool{cand("side", Vector2d(0, 3)), cand("along", Vector2d(-2, 0)),
                                    cand("same", Vector2d(0, 0))};
  const auto top = rank_candidates(pool, anchors, 3);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0], "along");
  EXPECT_THROW(rank_candidates(std::vector<Candidate>{}, anchors, 3), std::invalid_argument);
}

TEST(Ranking, NearestAnchorScoresTheCandidate) {
  const std::vector<AnchorDirection> anchors{
      {"near", Vector2d(0, 0), Vector2d(1, 0), Vector2d(1, 0), false},
      {"far", Vector2d(10, 0), Vector2d(-1, 0), Vector2d(1, 0), false}};
  // Closest to "near", whose descent points toward -x.
  EXPECT_NEAR(*alignment_score(cand("c", Vector2d(1, 0)), anchors), -1.0, 1e-12);
}

TEST(Ranking, MatchesIndependentRecomputation) {
  Rng rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  const int d = 5;
  auto rv = [&] {
    VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = n(rng);
    return v;
  };
  std::vector<AnchorDirection> anchors;
  for (int i = 0; i < 6; ++i) anchors.push_back({fmt::format("a{}", i), rv(), rv(), Vector2d(0.5, 0.5), false});
  std::vector<Candidate> pool;
  for (int i = 0; i < 100; ++i) pool.push_back(cand(fmt::format("c{:03}", i), rv()));

  std::vector<std::pair<double, std::string>> scored;
  for (const auto& c : pool) {
    double best_len = std::numeric_limits<double>::infinity(), score = 0.0;
    for (const auto& a : anchors) {
      const VectorXd disp = c.embedding - a.embedding;
      if (disp.norm() < best_len) {
        best_len = disp.norm();
        score = -disp.dot(a.g_star) / disp.norm();
      }
    }
    scored.emplace_back(-score, c.arch_id);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> expected;
  for (int i = 0; i < 10; ++i) expected.push_back(scored[i].second);
  EXPECT_EQ(rank_candidates(pool, anchors, 10), expected);
}

TEST(Selection, EnergyHeavyWeightPicksLowEnergyExtreme) {
  // Energy gradient shrinks toward the low-energy end.
  const std::vector<FrontEntry> front{entry("lo", 0.0, 0.0), entry("mid", 0.5, -0.5), entry("hi", 1.0, -1.0)};
  const std::vector<GradientEstimate> g{grad("lo", {0.1, 0}, {0, 1.0}), grad("mid", {0.5, 0}, {0, 0.5}),
                                        grad("hi", {1.0, 0}, {0, 0.1})};
  // Weighted norms for wd = (10, 1): lo 1.41, mid 5.02, hi 10.0.
  EXPECT_EQ(select_best(front, Vector2d(10, 1), g), "lo");
  EXPECT_EQ(select_best(front, Vector2d(1, 10), g), "hi");
}

TEST(Selection, KneeOnSymmetricFront) {
  const std::vector<FrontEntry> front{entry("a", 0.0, 0.0), entry("b", 0.5, -0.5), entry("c", 1.0, -1.0)};
  // Norms at wd = (1, 1): a = |(1, 1)| = 1.414, b = |(0.3, 0.3)| = 0.424, c = 1.414.
  const std::vector<GradientEstimate> g{grad("a", {1, 0}, {0, 1}), grad("b", {0.3, 0}, {0, 0.3}),
                                        grad("c", {0, 1}, {1, 0})};
  EXPECT_EQ(select_best(front, Vector2d(1, 1), g), "b");
}

TEST(Selection, SingleEntryAndErrors) {
  const std::vector<FrontEntry> one{entry("only", 1, 1)};
  const std::vector<GradientEstimate> g{grad("only", {1, 1}, {2, 2})};
  EXPECT_EQ(select_best(one, Vector2d(1, 1), g), "only");
  EXPECT_THROW(select_best(std::vector<FrontEntry>{}, Vector2d(1, 1), g), std::invalid_argument);
  EXPECT_THROW(select_best(one, Vector2d(1, 1), std::vector<GradientEstimate>{}), std::invalid_argument);
}

namespace {

// Smooth two-objective landscape over a 3-D grid of embeddings.
struct Landscape {
  std::vector<Candidate> pool;
  std::map<std::string, Observation> truth;

  explicit Landscape(std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 400; ++i) {
      const Eigen::Vector3d x(u(rng), u(rng), u(rng));
      const std::string id = fmt::format("x{:03}", i);
      pool.push_back({id, x});
      const double energy = 1.0 + 10.0 * x.squaredNorm();
      const double acc = 0.5 + 0.4 * (1.0 - std::exp(-2.0 * (x[0] + x[1] + 0.5 * x[2])));
      truth[id] = {energy, acc};
    }
  }
  Oracle oracle() const {
    return [this](const std::vector<std::string>& ids) {
      std::vector<Observation> out;
      for (const auto& id : ids) out.push_back(truth.at(id));
      return out;
    };
  }
};

}  // namespace

TEST(SearchLoop, HypervolumeNeverDecreases) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Landscape land(seed);
    SearchParams p;
    p.n_init = 40;
    p.n_batch = 10;
    p.max_iterations = 5;
    p.neighbors = 10;
    p.selection_neighbors = 20;
    const std::vector<Candidate> initial(land.pool.begin(), land.pool.begin() + 40);
    SearchState s = init_search(p, initial, land.oracle(), land.oracle());
    while (!s.finished()) s = search_iteration(s, land.pool, land.oracle(), land.oracle());
    ASSERT_EQ(s.iteration, 5);
    ASSERT_EQ(s.hypervolume.size(), 6u);
    for (std::size_t i = 1; i < s.hypervolume.size(); ++i) {
      EXPECT_GE(s.hypervolume[i], s.hypervolume[i - 1] - 1e-12) << "seed " << seed;
    }
    EXPECT_EQ(s.measured.size(), 90u);
    EXPECT_EQ(s.evaluated.size(), 90u);
  }
}

TEST(SearchLoop, SatisfiedConstraintsSkipTheLoop) {
  const Landscape land(3);
  SearchParams p;
  p.n_init = 30;
  p.constraints.max_energy_mj = 1e9;
  const std::vector<Candidate> initial(land.pool.begin(), land.pool.begin() + 30);
  const SearchState s = init_search(p, initial, land.oracle(), land.oracle());
  EXPECT_TRUE(s.constraints_met());
  EXPECT_TRUE(s.finished());
  EXPECT_EQ(s.iteration, 0);
}

TEST(SearchLoop, EmptyConstraintsRunEveryIteration) {
  const Landscape land(4);
  SearchParams p;
  p.n_init = 30;
  p.max_iterations = 3;
  const std::vector<Candidate> initial(land.pool.begin(), land.pool.begin() + 30);
  SearchState s = init_search(p, initial, land.oracle(), land.oracle());
  int runs = 0;
  while (!s.finished()) {
    s = search_iteration(s, land.pool, land.oracle(), land.oracle());
    ++runs;
  }
  EXPECT_EQ(runs, 3);
}

TEST(SearchLoop, OracleFailureLeavesStateUntouched) {
  const Landscape land(5);
  SearchParams p;
  p.n_init = 30;
  const std::vector<Candidate> initial(land.pool.begin(), land.pool.begin() + 30);
  const SearchState s = init_search(p, initial, land.oracle(), land.oracle());
  const Oracle broken = [](const std::vector<std::string>&) -> std::vector<Observation> {
    throw std::runtime_error("device unplugged");
  };
  EXPECT_THROW(search_iteration(s, land.pool, land.oracle(), broken), std::runtime_error);
  EXPECT_EQ(s.iteration, 0);
  EXPECT_EQ(s.measured.size(), 30u);
}

TEST(SearchLoop, ReplayThroughObservationsMatches) {
  const Landscape land(6);
  SearchParams p;
  p.n_init = 30;
  p.max_iterations = 2;
  const std::vector<Candidate> initial(land.pool.begin(), land.pool.begin() + 30);
  SearchState live = init_search(p, initial, land.oracle(), land.oracle());
  std::vector<Observation> obs;
  for (const auto& c : initial) obs.push_back(land.truth.at(c.arch_id));
  SearchState replay = init_from_observations(p, initial, obs, obs);
  while (!live.finished()) {
    const std::size_t before = live.measured.size();
    live = search_iteration(live, land.pool, land.oracle(), land.oracle());
    std::vector<Candidate> batch;
    std::vector<Observation> batch_obs;
    for (std::size_t i = before; i < live.measured.size(); ++i) {
      batch.push_back({live.measured[i].arch_id, live.measured[i].embedding});
      batch_obs.push_back(land.truth.at(live.measured[i].arch_id));
    }
    replay = apply_batch(replay, batch, batch_obs, batch_obs);
  }
  EXPECT_EQ(replay.hypervolume, live.hypervolume);
  ASSERT_EQ(replay.front.size(), live.front.size());
  for (std::size_t i = 0; i < live.front.size(); ++i) EXPECT_EQ(replay.front[i].arch_id, live.front[i].arch_id);
  EXPECT_EQ(select_best(replay, Vector2d(1, 3)), select_best(live, Vector2d(1, 3)));
}

TEST(Files, FrontCsv) {
  std::ostringstream out;
  FrontEntry e = entry("abc", 0.25, -0.5);
  e.energy_mj = 12.5;
  e.energy_norm = 0.25;
  e.score_raw = 0.9;
  e.score_norm = 0.5;
  write_front_csv(out, 3, std::vector<FrontEntry>{e}, true);
  EXPECT_EQ(out.str(), std::string(kFrontCsvHeader) + "\n3,abc,12.5,0.25,0.9,0.5,measured\n");
}

TEST(Params, Checks) {
  SearchParams p;
  EXPECT_NO_THROW(p.check());
  p.neighbors = 2;
  EXPECT_THROW(p.check(), std::invalid_argument);
  p = SearchParams{};
  p.ws = Vector2d(0, 1);
  EXPECT_THROW(p.check(), std::invalid_argument);
  p = SearchParams{};
  p.n_init = 3;
  EXPECT_THROW(p.check(), std::invalid_argument);
}
