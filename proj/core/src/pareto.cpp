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

#include "hwnas/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <Eigen/QR>
#include <fmt/format.h>

namespace hwnas {

std::vector<double> normalize_energy(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("normalize_energy needs >= 1 value");
  const MinMaxScale scale = MinMaxScale::fit(values);
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(scale.apply(v));
  return out;
}

MinMaxScale MinMaxScale::fit(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("min-max scale needs >= 1 value");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {*lo, *hi};
}

std::vector<double> normalize_score(std::span<const double> values) {
  std::vector<double> out(values.size());
  double floor = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (std::isfinite(v) && v > 0.0) {
      out[i] = std::log(v);
      floor = std::min(floor, out[i]);
    } else {
      out[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  const double sentinel = std::isfinite(floor) ? floor - 1.0 : -1.0;
  for (double& v : out) {
    if (std::isnan(v)) v = sentinel;
  }
  return out;
}

bool dominates(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("objective vectors differ in length");
  bool strict = false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strict = true;
  }
  return strict;
}

std::string_view to_string(Provenance p) {
  return p == Provenance::kMeasured ? "measured" : "predicted";
}

std::vector<std::size_t> pareto_indices(std::span<const Eigen::VectorXd> points,
                                        std::span<const std::string> ids) {
  if (points.size() != ids.size()) throw std::invalid_argument("points and ids differ in count");
  const std::size_t n = points.size();
  if (n == 0) return {};
  const Eigen::Index m = points[0].size();
  for (const auto& p : points) {
    if (p.size() != m) throw std::invalid_argument("objective vectors differ in length");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> keep;

  if (m == 2) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (points[a][0] != points[b][0]) return points[a][0] < points[b][0];
      if (points[a][1] != points[b][1]) return points[a][1] < points[b][1];
      return ids[a] < ids[b];
    });
    // Sweep groups of equal f1: a point survives when it has its group's
    // minimum f2 and beats every f2 seen at strictly smaller f1.
    double best_before = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && points[order[j]][0] == points[order[i]][0]) ++j;
      const double group_min = points[order[i]][1];
      if (group_min < best_before) {
        for (std::size_t t = i; t < j && points[order[t]][1] == group_min; ++t) keep.push_back(order[t]);
        best_before = group_min;
      }
      i = j;
    }
    return keep;
  }

  for (std::size_t i = 0; i < n; ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < n && !dominated; ++j) dominated = j != i && dominates(points[j], points[i]);
    if (!dominated) keep.push_back(i);
  }
  std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    if (points[a][0] != points[b][0]) return points[a][0] < points[b][0];
    return ids[a] < ids[b];
  });
  return keep;
}

std::vector<FrontEntry> pareto_front(std::span<const FrontEntry> entries) {
  std::vector<Eigen::VectorXd> f;
  std::vector<std::string> ids;
  f.reserve(entries.size());
  ids.reserve(entries.size());
  for (const auto& e : entries) {
    f.push_back(e.f);
    ids.push_back(e.arch_id);
  }
  std::vector<FrontEntry> out;
  for (std::size_t i : pareto_indices(f, ids)) out.push_back(entries[i]);
  return out;
}

double hypervolume_2d(std::span<const Eigen::VectorXd> points, const Eigen::Vector2d& reference) {
  std::vector<Eigen::Vector2d> inside;
  for (const auto& p : points) {
    if (p.size() != 2) throw std::invalid_argument("hypervolume_2d takes 2-D points");
    if (p[0] < reference[0] && p[1] < reference[1]) inside.emplace_back(p[0], p[1]);
  }
  std::sort(inside.begin(), inside.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a[0] != b[0] ? a[0] < b[0] : a[1] < b[1];
  });
  double area = 0.0;
  double ceiling = reference[1];
  for (const auto& p : inside) {
    if (p[1] >= ceiling) continue;
    area += (reference[0] - p[0]) * (ceiling - p[1]);
    ceiling = p[1];
  }
  return area;
}

// ---------------------------------------------------------------------------

std::vector<FrontEntry> nearest_neighbors(const FrontEntry& anchor, std::span<const FrontEntry> pool,
                                          std::size_t k) {
  std::vector<std::pair<double, const FrontEntry*>> ranked;
  ranked.reserve(pool.size());
  for (const auto& e : pool) {
    if (e.arch_id == anchor.arch_id) continue;
    ranked.emplace_back((e.embedding - anchor.embedding).squaredNorm(), &e);
  }
  const std::size_t take = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first < b.first : a.second->arch_id < b.second->arch_id;
                    });
  std::vector<FrontEntry> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(*ranked[i].second);
  return out;
}

GradientEstimate estimate_gradients(const FrontEntry& anchor, std::span<const FrontEntry> neighbors,
                                    double ridge) {
  if (neighbors.size() < 3) throw std::invalid_argument("insufficient neighborhood");
  if (ridge < 0.0) throw std::invalid_argument("ridge must be >= 0");
  const auto n = static_cast<Eigen::Index>(neighbors.size());
  const Eigen::Index d = anchor.embedding.size();
  const Eigen::Index m = anchor.f.size();

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + d, d);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n + d, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = neighbors[static_cast<std::size_t>(i)];
    if (e.embedding.size() != d || e.f.size() != m) {
      throw std::invalid_argument("neighbor dimensions differ from the anchor's");
    }
    a.row(i) = (e.embedding - anchor.embedding).transpose();
    b.row(i) = (e.f - anchor.f).transpose();
  }
  a.bottomRows(d).diagonal().setConstant(std::sqrt(ridge));

  GradientEstimate est;
  est.g = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(a).solve(b).transpose();
  est.anchor = anchor.arch_id;
  est.neighbor_count = static_cast<int>(n);
  return est;
}

MinNormResult min_norm_direction(const Eigen::MatrixXd& g, const Eigen::VectorXd& ws) {
  const Eigen::Index m = g.rows();
  if (m < 1) throw std::invalid_argument("min_norm_direction needs >= 1 gradient row");
  if (ws.size() != m) throw std::invalid_argument("ws length differs from the objective count");
  if ((ws.array() <= 0.0).any()) throw std::invalid_argument("ws entries must be > 0");

  const Eigen::MatrixXd gram = g * g.transpose();
  MinNormResult r;
  Eigen::Index start = 0;
  gram.diagonal().minCoeff(&start);
  r.lambda = Eigen::VectorXd::Zero(m);
  r.lambda[start] = 1.0;

  // Pairwise Frank-Wolfe: move weight from the worst active vertex to the
  // best vertex, with exact line search.
  for (; r.iterations < kFrankWolfeMaxIterations; ++r.iterations) {
    const Eigen::VectorXd grad = gram * r.lambda;
    const double vv = r.lambda.dot(grad);
    Eigen::Index t = 0;
    const double vt = grad.minCoeff(&t);
    if (vv - vt <= kFrankWolfeGapTolerance) break;
    Eigen::Index a = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (r.lambda[i] > 0.0 && (a < 0 || grad[i] > grad[a])) a = i;
    }
    const double curvature = gram(t, t) - 2.0 * gram(t, a) + gram(a, a);
    const double slope = grad[a] - grad[t];
    const double gamma = curvature > 0.0 ? std::clamp(slope / curvature, 0.0, r.lambda[a]) : r.lambda[a];
    r.lambda[a] -= gamma;
    r.lambda[t] += gamma;
  }

  const double scale = std::max(1.0, std::sqrt(gram.diagonal().maxCoeff()));
  r.norm = std::sqrt(std::max(0.0, r.lambda.dot(gram * r.lambda)));
  const Eigen::VectorXd weighted = ws.cwiseProduct(r.lambda);
  r.lambda_scaled = weighted / weighted.sum();
  if (r.norm <= 1e-9 * scale) {
    r.converged = true;
    r.g_star = Eigen::VectorXd::Zero(g.cols());
  } else {
    r.g_star = g.transpose() * r.lambda_scaled;
  }
  return r;
}

std::optional<double> alignment_score(const Candidate& candidate,
                                      std::span<const AnchorDirection> anchors) {
  std::optional<double> best;
  double best_len = 0.0;
  for (const auto& a : anchors) {
    const Eigen::VectorXd d = candidate.embedding - a.embedding;
    const double len = d.norm();
    if (len <= 1e-12) continue;
    if (!best || len < best_len) {
      best_len = len;
      best = -d.dot(a.g_star) / len;
    }
  }
  return best;
}

std::vector<std::string> rank_candidates(std::span<const Candidate> candidates,
                                         std::span<const AnchorDirection> anchors, std::size_t n) {
  if (candidates.empty()) throw std::invalid_argument("candidate pool is empty");
  std::vector<std::pair<double, const std::string*>> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (const auto s = alignment_score(c, anchors)) scored.emplace_back(*s, &c.arch_id);
  }
  const std::size_t take = std::min(n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : *a.second < *b.second;
                    });
  std::vector<std::string> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(*scored[i].second);
  return out;
}

std::string select_best(std::span<const FrontEntry> front, const Eigen::VectorXd& wd,
                        std::span<const GradientEstimate> gradients) {
  if (front.empty()) throw std::invalid_argument("front is empty");
  if ((wd.array() < 0.0).any()) throw std::invalid_argument("wd entries must be >= 0");
  std::map<std::string_view, const GradientEstimate*> by_anchor;
  for (const auto& g : gradients) by_anchor[g.anchor] = &g;

  const std::string* best = nullptr;
  double best_norm = 0.0;
  for (const auto& e : front) {
    const auto it = by_anchor.find(e.arch_id);
    if (it == by_anchor.end()) throw std::invalid_argument("no gradient estimate for " + e.arch_id);
    const Eigen::MatrixXd& g = it->second->g;
    if (g.rows() != wd.size()) throw std::invalid_argument("wd length differs from the objective count");
    const double norm = (g.transpose() * wd).norm();
    if (!best || norm < best_norm || (norm == best_norm && e.arch_id < *best)) {
      best = &e.arch_id;
      best_norm = norm;
    }
  }
  return *best;
}

// ---------------------------------------------------------------------------

void SearchParams::check() const {
  if (ws.size() != 2 || wd.size() != 2) throw std::invalid_argument("search uses two objectives");
  if ((ws.array() <= 0.0).any()) throw std::invalid_argument("ws entries must be > 0");
  if ((wd.array() < 0.0).any()) throw std::invalid_argument("wd entries must be >= 0");
  if (n_init < 4) throw std::invalid_argument("n_init must be >= 4");
  if (n_batch < 1) throw std::invalid_argument("n_batch must be >= 1");
  if (max_iterations < 0) throw std::invalid_argument("max_iterations must be >= 0");
  if (neighbors < 3 || selection_neighbors < 3) throw std::invalid_argument("neighbor counts must be >= 3");
  if (ridge < 0.0) throw std::invalid_argument("ridge must be >= 0");
}

bool SearchState::constraints_met() const {
  const Constraints& c = params.constraints;
  if (c.empty()) return false;
  return std::any_of(front.begin(), front.end(), [&](const FrontEntry& e) {
    return (!c.max_energy_mj || e.energy_mj <= *c.max_energy_mj) &&
           (!c.min_accuracy || e.score_raw >= *c.min_accuracy);
  });
}

namespace {

std::vector<Observation> call_oracle(const Oracle& oracle, const std::vector<std::string>& ids,
                                     std::string_view what) {
  auto obs = oracle(ids);
  if (obs.size() != ids.size()) {
    throw std::runtime_error(fmt::format("{} oracle returned {} results for {} ids", what, obs.size(), ids.size()));
  }
  for (const auto& o : obs) {
    if (!std::isfinite(o.energy_mj)) throw std::runtime_error(fmt::format("{} oracle returned a non-finite energy", what));
  }
  return obs;
}

void add_observations(SearchState& state, std::span<const Candidate> batch,
                      const std::vector<Observation>& predicted,
                      const std::vector<Observation>& measured) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    FrontEntry p;
    p.arch_id = batch[i].arch_id;
    p.embedding = batch[i].embedding;
    p.provenance = Provenance::kPredicted;
    p.energy_mj = predicted[i].energy_mj;
    p.energy_norm = state.energy_scale.apply(p.energy_mj);
    p.score_raw = predicted[i].score;
    state.predicted.push_back(std::move(p));

    FrontEntry e;
    e.arch_id = batch[i].arch_id;
    e.embedding = batch[i].embedding;
    e.provenance = Provenance::kMeasured;
    e.energy_mj = measured[i].energy_mj;
    e.energy_norm = state.energy_scale.apply(e.energy_mj);
    e.score_raw = measured[i].score;
    e.score_norm = state.accuracy_scale.apply(measured[i].score);
    e.f = Eigen::Vector2d(e.energy_norm, -e.score_norm);
    state.measured.push_back(std::move(e));
    state.evaluated.insert(batch[i].arch_id);
  }
  // Proxy normalization depends on the whole predicted set.
  std::vector<double> raw;
  raw.reserve(state.predicted.size());
  for (const auto& p : state.predicted) raw.push_back(p.score_raw);
  const auto norm = normalize_score(raw);
  for (std::size_t i = 0; i < state.predicted.size(); ++i) {
    auto& p = state.predicted[i];
    p.score_norm = norm[i];
    p.f = Eigen::Vector2d(p.energy_norm, -p.score_norm);
  }
}

}  // namespace

void rebuild(SearchState& state) {
  state.front = pareto_front(state.measured);
  state.gradients.clear();
  state.selection_gradients.clear();
  state.directions.clear();
  const std::size_t available = state.measured.size() - 1;
  const std::size_t k = std::min(state.params.neighbors, available);
  const std::size_t k_sel = std::min(state.params.selection_neighbors, available);
  for (const auto& anchor : state.front) {
    GradientEstimate g = estimate_gradients(anchor, nearest_neighbors(anchor, state.measured, k),
                                            state.params.ridge);
    const MinNormResult mn = min_norm_direction(g.g, state.params.ws);
    state.directions.push_back({anchor.arch_id, anchor.embedding, mn.g_star, mn.lambda_scaled, mn.converged});
    state.selection_gradients.push_back(
        k_sel == k ? g
                   : estimate_gradients(anchor, nearest_neighbors(anchor, state.measured, k_sel),
                                        state.params.ridge));
    state.gradients.push_back(std::move(g));
  }
  std::vector<Eigen::VectorXd> f;
  for (const auto& e : state.front) f.push_back(e.f);
  state.hypervolume.push_back(hypervolume_2d(f, state.hv_reference));
}

SearchState init_from_observations(const SearchParams& params, std::span<const Candidate> initial,
                                   const std::vector<Observation>& predicted,
                                   const std::vector<Observation>& measured) {
  params.check();
  if (initial.size() < 4) throw std::invalid_argument("initial sample needs >= 4 architectures");
  if (predicted.size() != initial.size() || measured.size() != initial.size()) {
    throw std::invalid_argument("observation count differs from the initial sample");
  }
  std::set<std::string> seen;
  for (const auto& c : initial) {
    if (!seen.insert(c.arch_id).second) throw std::invalid_argument("duplicate initial id " + c.arch_id);
  }

  SearchState state;
  state.params = params;
  std::vector<double> energies;
  std::vector<double> accuracies;
  for (const auto& m : measured) {
    energies.push_back(m.energy_mj);
    accuracies.push_back(m.score);
  }
  state.energy_scale = MinMaxScale::fit(energies);
  state.accuracy_scale = MinMaxScale::fit(accuracies);
  add_observations(state, initial, predicted, measured);
  double worst_f2 = -std::numeric_limits<double>::infinity();
  for (const auto& e : state.measured) worst_f2 = std::max(worst_f2, e.f[1]);
  state.hv_reference = Eigen::Vector2d(1.1, worst_f2 + 0.1);
  rebuild(state);
  return state;
}

SearchState init_search(const SearchParams& params, std::span<const Candidate> initial,
                        const Oracle& predict, const Oracle& measure) {
  params.check();
  std::vector<std::string> ids;
  for (const auto& c : initial) ids.push_back(c.arch_id);
  const auto predicted = call_oracle(predict, ids, "predict");
  const auto measured = call_oracle(measure, ids, "measure");
  return init_from_observations(params, initial, predicted, measured);
}

SearchState apply_batch(const SearchState& state, std::span<const Candidate> batch,
                        const std::vector<Observation>& predicted,
                        const std::vector<Observation>& measured) {
  if (predicted.size() != batch.size() || measured.size() != batch.size()) {
    throw std::invalid_argument("observation count differs from the batch");
  }
  for (const auto& c : batch) {
    if (state.evaluated.contains(c.arch_id)) throw std::invalid_argument("already evaluated: " + c.arch_id);
  }
  SearchState next = state;
  add_observations(next, batch, predicted, measured);
  rebuild(next);
  ++next.iteration;
  return next;
}

SearchState search_iteration(const SearchState& state, std::span<const Candidate> pool,
                             const Oracle& predict, const Oracle& measure) {
  std::vector<Candidate> open;
  for (const auto& c : pool) {
    if (!state.evaluated.contains(c.arch_id)) open.push_back(c);
  }
  const auto chosen = rank_candidates(open, state.directions, state.params.n_batch);
  std::map<std::string_view, const Candidate*> by_id;
  for (const auto& c : open) by_id[c.arch_id] = &c;
  std::vector<Candidate> batch;
  for (const auto& id : chosen) batch.push_back(*by_id.at(id));

  const auto predicted = call_oracle(predict, chosen, "predict");
  const auto measured = call_oracle(measure, chosen, "measure");
  return apply_batch(state, batch, predicted, measured);
}

std::string select_best(const SearchState& state, const Eigen::VectorXd& wd) {
  return select_best(state.front, wd, state.selection_gradients);
}

void write_front_csv(std::ostream& out, int iteration, std::span<const FrontEntry> entries,
                     bool header) {
  if (header) out << kFrontCsvHeader << '\n';
  for (const auto& e : entries) {
    out << fmt::format("{},{},{},{},{},{},{}\n", iteration, e.arch_id, e.energy_mj, e.energy_norm,
                       e.score_raw, e.score_norm, to_string(e.provenance));
  }
}

}  // namespace hwnas
