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

// Reference implementations written without the library's helpers, used to
// cross-check library results.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hwnas/arch_space.hpp"
#include "hwnas/kernel_config.hpp"
#include "hwnas/pareto.hpp"

namespace hwnas::oracle {

inline bool weakly_better_everywhere(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  bool strict = false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strict = true;
  }
  return strict;
}

/// O(n^2) non-dominated filter, ordered by (f1, id).
inline std::vector<std::size_t> brute_force_front(const std::vector<Eigen::VectorXd>& pts,
                                                  const std::vector<std::string>& ids) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
      dominated = j != i && weakly_better_everywhere(pts[j], pts[i]);
    }
    if (!dominated) keep.push_back(i);
  }
  std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    if (pts[a][0] != pts[b][0]) return pts[a][0] < pts[b][0];
    return ids[a] < ids[b];
  });
  return keep;
}

/// Area of the union of boxes [p, ref] by coordinate compression.
inline double union_area(const std::vector<Eigen::VectorXd>& pts, const Eigen::Vector2d& ref) {
  std::vector<double> xs{ref[0]}, ys{ref[1]};
  for (const auto& p : pts) {
    if (p[0] < ref[0] && p[1] < ref[1]) {
      xs.push_back(p[0]);
      ys.push_back(p[1]);
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      const bool covered = std::any_of(pts.begin(), pts.end(), [&](const Eigen::VectorXd& p) {
        return p[0] <= xs[i] && p[1] <= ys[j];
      });
      if (covered) area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
    }
  }
  return area;
}

/// Weight on g1 minimizing |l g1 + (1 - l) g2|.
inline double two_objective_lambda(const Eigen::VectorXd& g1, const Eigen::VectorXd& g2) {
  const double den = (g1 - g2).squaredNorm();
  if (den == 0.0) return 0.5;
  return std::clamp((g2 - g1).dot(g2) / den, 0.0, 1.0);
}

/// Smallest |sum l_i g_i| over the simplex grid with spacing 1/steps; m in {3, 4}.
inline double simplex_grid_min_norm(const Eigen::MatrixXd& g, int steps) {
  const Eigen::MatrixXd q = g * g.transpose();
  const int m = static_cast<int>(g.rows());
  const double h = 1.0 / steps;
  double best = std::numeric_limits<double>::infinity();
  if (m == 3) {
    for (int a = 0; a <= steps; ++a) {
      for (int b = 0; a + b <= steps; ++b) {
        const Eigen::Vector3d l(a * h, b * h, (steps - a - b) * h);
        best = std::min(best, l.dot(q * l));
      }
    }
  } else if (m == 4) {
    for (int a = 0; a <= steps; ++a) {
      for (int b = 0; a + b <= steps; ++b) {
        const double la = a * h, lb = b * h;
        for (int c = 0; a + b + c <= steps; ++c) {
          const double lc = c * h, ld = 1.0 - la - lb - lc;
          const double v = q(0, 0) * la * la + q(1, 1) * lb * lb + q(2, 2) * lc * lc + q(3, 3) * ld * ld +
                           2.0 * (q(0, 1) * la * lb + q(0, 2) * la * lc + q(0, 3) * la * ld +
                                  q(1, 2) * lb * lc + q(1, 3) * lb * ld + q(2, 3) * lc * ld);
          best = std::min(best, v);
        }
      }
    }
  }
  return std::sqrt(std::max(0.0, best));
}

/// Multiply-accumulates counted one at a time over every output element and
/// window tap (padding taps included, matching the closed form).
inline std::int64_t counted_macs(const KernelConfig& k) {
  const int ho = (k.height + k.stride - 1) / k.stride;
  const int wo = (k.width + k.stride - 1) / k.stride;
  const bool depthwise = k.pattern != KernelPattern::kConvBnRelu;
  std::int64_t n = 0;
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      for (int co = 0; co < k.out_channels; ++co) {
        const int cin = depthwise ? 1 : k.in_channels;
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < k.kernel_size; ++ky) {
            for (int kx = 0; kx < k.kernel_size; ++kx) ++n;
          }
        }
      }
    }
  }
  return n;
}

/// Top-k overlap computed with sets.
inline double top_k_overlap(std::vector<std::pair<std::string, double>> pred,
                            std::vector<std::pair<std::string, double>> truth, int k) {
  auto top = [k](std::vector<std::pair<std::string, double>> v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return a.second < b.second || (a.second == b.second && a.first < b.first);
    });
    std::set<std::string> s;
    for (int i = 0; i < k; ++i) s.insert(v[i].first);
    return s;
  };
  const auto a = top(std::move(pred));
  const auto b = top(std::move(truth));
  int hits = 0;
  for (const auto& id : a) hits += static_cast<int>(b.count(id));
  return static_cast<double>(hits) / k;
}

/// KL between two histograms built independently of the library.
inline double histogram_kl(const std::vector<double>& p, const std::vector<double>& q, int bins,
                           double eps = 1e-9) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : p) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : q) lo = std::min(lo, v), hi = std::max(hi, v);
  if (hi <= lo) return 0.0;
  auto hist = [&](const std::vector<double>& v) {
    std::vector<double> h(bins, eps);
    for (double x : v) {
      int b = static_cast<int>((x - lo) / (hi - lo) * bins);
      h[std::clamp(b, 0, bins - 1)] += 1.0;
    }
    double s = 0.0;
    for (double c : h) s += c;
    for (double& c : h) c /= s;
    return h;
  };
  const auto hp = hist(p), hq = hist(q);
  double kl = 0.0;
  for (int i = 0; i < bins; ++i) kl += hp[i] * std::log(hp[i] / hq[i]);
  return kl;
}

inline Candidate candidate(const Architecture& a) {
  const ArchEmbedding e = embed(a);
  return {a.id(), Eigen::Map<const Eigen::VectorXd>(e.data(), kEmbeddingDim)};
}

}  // namespace hwnas::oracle
