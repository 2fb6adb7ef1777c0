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
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace hwnas {

// ---------------------------------------------------------------------------
// Normalization and dominance
// ---------------------------------------------------------------------------

/// Min-max scaling; an all-equal input maps to zeros.
std::vector<double> normalize_energy(std::span<const double> values);

/// Min-max scaling frozen at fit time, so later values keep their meaning.
struct MinMaxScale {
  double min = 0.0;
  double max = 1.0;
  static MinMaxScale fit(std::span<const double> values);
  double apply(double v) const { return max > min ? (v - min) / (max - min) : 0.0; }
};

/// ln(v); values <= 0 or non-finite become (smallest finite result - 1), or
/// -1 when no value is usable.
std::vector<double> normalize_score(std::span<const double> values);

/// a_i <= b_i for all i and a_j < b_j for some j. Throws on length mismatch.
bool dominates(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

enum class Provenance : std::uint8_t { kPredicted, kMeasured };
std::string_view to_string(Provenance p);

struct FrontEntry {
  std::string arch_id;
  Eigen::VectorXd embedding;
  Eigen::VectorXd f;  // objectives, all minimized
  Provenance provenance = Provenance::kMeasured;
  double energy_mj = 0.0;
  double energy_norm = 0.0;
  double score_raw = 0.0;  // accuracy when measured, proxy score when predicted
  double score_norm = 0.0;
};

/// Indices of the non-dominated points ordered by (f1, id).
std::vector<std::size_t> pareto_indices(std::span<const Eigen::VectorXd> points,
                                        std::span<const std::string> ids);
/// Non-dominated subset ordered by (f1, id); duplicates are all kept.
std::vector<FrontEntry> pareto_front(std::span<const FrontEntry> points);

/// Area dominated by 2-D points (minimized) and bounded by `reference`.
double hypervolume_2d(std::span<const Eigen::VectorXd> points, const Eigen::Vector2d& reference);

// ---------------------------------------------------------------------------
// Local gradients and the common descent direction
// ---------------------------------------------------------------------------

struct GradientEstimate {
  Eigen::MatrixXd g;  // m x D
  std::string anchor;
  int neighbor_count = 0;
};

/// k nearest entries to `anchor` by embedding distance, excluding the anchor's
/// own id; ties by id.
std::vector<FrontEntry> nearest_neighbors(const FrontEntry& anchor, std::span<const FrontEntry> pool,
                                          std::size_t k);

/// Row i is the ridge least-squares slope of f_i - f_i(anchor) on
/// embedding - anchor embedding. Throws "insufficient neighborhood" below 3.
GradientEstimate estimate_gradients(const FrontEntry& anchor, std::span<const FrontEntry> neighbors,
                                    double ridge);

struct MinNormResult {
  Eigen::VectorXd lambda;         // minimizer on the simplex
  Eigen::VectorXd lambda_scaled;  // ws-weighted, renormalized
  Eigen::VectorXd g_star;         // sum of lambda_scaled_i * g_i
  double norm = 0.0;              // |sum lambda_i g_i|
  int iterations = 0;
  bool converged = false;         // common direction vanished; g_star = 0
};

inline constexpr int kFrankWolfeMaxIterations = 200;
inline constexpr double kFrankWolfeGapTolerance = 1e-8;

MinNormResult min_norm_direction(const Eigen::MatrixXd& g, const Eigen::VectorXd& ws);

struct AnchorDirection {
  std::string anchor;
  Eigen::VectorXd embedding;
  Eigen::VectorXd g_star;
  Eigen::VectorXd lambda;
  bool converged = false;
};

struct Candidate {
  std::string arch_id;
  Eigen::VectorXd embedding;
};

/// <d, -g_star> / |d| at the nearest anchor, d = candidate - anchor. Anchors
/// at zero displacement are skipped; distance ties go to the earlier anchor.
/// nullopt if every anchor was skipped.
std::optional<double> alignment_score(const Candidate& candidate,
                                      std::span<const AnchorDirection> anchors);

/// Highest `n` alignment scores, ties by id. Throws on an empty pool.
std::vector<std::string> rank_candidates(std::span<const Candidate> candidates,
                                         std::span<const AnchorDirection> anchors, std::size_t n);

/// argmin over entries of |sum_i wd_i g_i|, ties by id.
std::string select_best(std::span<const FrontEntry> front, const Eigen::VectorXd& wd,
                        std::span<const GradientEstimate> gradients);

// ---------------------------------------------------------------------------
// Search loop
// ---------------------------------------------------------------------------

struct Constraints {
  std::optional<double> max_energy_mj;
  std::optional<double> min_accuracy;
  bool empty() const { return !max_energy_mj && !min_accuracy; }
};

struct SearchParams {
  Eigen::VectorXd ws = Eigen::Vector2d(3.0, 1.0);  // energy, accuracy
  Eigen::VectorXd wd = Eigen::Vector2d(1.0, 1.0);
  std::size_t n_init = 100;
  std::size_t n_batch = 10;
  Constraints constraints;
  int max_iterations = 10;
  std::size_t neighbors = 30;            // local fits behind the search directions
  std::size_t selection_neighbors = 100;  // wider fits behind select_best
  double ridge = 1e-3;

  void check() const;
};

/// What an oracle reports per architecture. `score` is accuracy for the
/// measuring oracle and the raw proxy score for the predicting one.
struct Observation {
  double energy_mj = 0.0;
  double score = 0.0;
};

using Oracle = std::function<std::vector<Observation>(const std::vector<std::string>& ids)>;

struct SearchState {
  SearchParams params;
  MinMaxScale energy_scale;
  MinMaxScale accuracy_scale;  // measured entries only
  Eigen::Vector2d hv_reference = Eigen::Vector2d::Zero();
  std::vector<FrontEntry> measured;
  std::vector<FrontEntry> predicted;
  std::vector<FrontEntry> front;  // non-dominated measured entries
  std::set<std::string> evaluated;
  std::vector<GradientEstimate> gradients;            // one per front entry
  std::vector<GradientEstimate> selection_gradients;  // one per front entry
  std::vector<AnchorDirection> directions;            // one per front entry
  std::vector<double> hypervolume;          // after init, then per iteration
  int iteration = 0;

  bool constraints_met() const;
  bool finished() const { return constraints_met() || iteration >= params.max_iterations; }
};

/// Predicts and measures `initial`, fixes the energy and accuracy scales and
/// the hypervolume reference from the measurements, then builds the front and
/// directions.
SearchState init_search(const SearchParams& params, std::span<const Candidate> initial,
                        const Oracle& predict, const Oracle& measure);

/// One batch: rank unevaluated candidates, predict and measure the top
/// n_batch, rebuild front and directions. Oracle errors propagate and leave
/// `state` untouched.
SearchState search_iteration(const SearchState& state, std::span<const Candidate> pool,
                             const Oracle& predict, const Oracle& measure);

/// Oracle-free halves of the two calls above; replay feeds recorded
/// observations through these.
SearchState init_from_observations(const SearchParams& params, std::span<const Candidate> initial,
                                   const std::vector<Observation>& predicted,
                                   const std::vector<Observation>& measured);
SearchState apply_batch(const SearchState& state, std::span<const Candidate> batch,
                        const std::vector<Observation>& predicted,
                        const std::vector<Observation>& measured);

/// Recomputes front, both gradient sets, directions and hypervolume from
/// `measured`.
void rebuild(SearchState& state);

std::string select_best(const SearchState& state, const Eigen::VectorXd& wd);

inline constexpr std::string_view kFrontCsvHeader =
    "iteration,arch_id,energy_mJ,energy_norm,score_raw,score_norm,provenance";

void write_front_csv(std::ostream& out, int iteration, std::span<const FrontEntry> entries,
                     bool header);

}  // namespace hwnas
