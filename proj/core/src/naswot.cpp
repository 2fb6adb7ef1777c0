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

#include "hwnas/naswot.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "hwnas/seed.hpp"

namespace hwnas {

namespace {

constexpr float kBnEps = 1e-5F;

ConvWeights make_conv(int cin, int cout, int k, int stride, std::uint64_t seed) {
  ConvWeights cw{cin, cout, k, stride, Eigen::MatrixXf(cout, cin * k * k)};
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index c = 0; c < cw.w.cols(); ++c) {
    for (Eigen::Index r = 0; r < cw.w.rows(); ++r) cw.w(r, c) = static_cast<float>(u(rng));
  }
  return cw;
}

FeatureMap conv2d(const ConvWeights& cw, const FeatureMap& x, int batch, int h, int w) {
  const int k = cw.kernel_size;
  const int s = cw.stride;
  const int pad = (k - 1) / 2;
  const int ho = ceil_div(h, s);
  const int wo = ceil_div(w, s);
  Eigen::MatrixXf cols = Eigen::MatrixXf::Zero(cw.in_channels * k * k, batch * ho * wo);
  for (int c = 0; c < cw.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (c * k + ky) * k + kx;
        for (int b = 0; b < batch; ++b) {
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s - pad + kx;
              if (ix < 0 || ix >= w) continue;
              cols(row, (b * ho + oy) * wo + ox) = x(c, (b * h + iy) * w + ix);
            }
          }
        }
      }
    }
  }
  return cw.w * cols;
}

// Sum of per-sample partial sums taken in sorted order, so the result does
// not depend on the order of the batch.
double batch_sum(const Eigen::Ref<const Eigen::RowVectorXf>& row, int batch, bool squared, double shift) {
  const Eigen::Index per = row.size() / batch;
  std::vector<double> parts(static_cast<std::size_t>(batch), 0.0);
  for (int b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < per; ++i) {
      const double v = static_cast<double>(row[b * per + i]) - shift;
      parts[static_cast<std::size_t>(b)] += squared ? v * v : v;
    }
  }
  std::sort(parts.begin(), parts.end());
  double total = 0.0;
  for (double p : parts) total += p;
  return total;
}

void batch_norm(FeatureMap& x, int batch) {
  const auto n = static_cast<double>(x.cols());
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    auto row = x.row(c);
    const double mean = batch_sum(row, batch, false, 0.0) / n;
    const double var = batch_sum(row, batch, true, mean) / n;
    const auto inv = static_cast<float>(1.0 / std::sqrt(var + kBnEps));
    row.array() = (row.array() - static_cast<float>(mean)) * inv;
  }
}

FeatureMap avg_pool3(const FeatureMap& x, int batch, int h, int w) {
  FeatureMap out = FeatureMap::Zero(x.rows(), x.cols());
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        int count = 0;
        const Eigen::Index dst = (b * h + y) * w + xx;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int iy = y + dy;
            const int ix = xx + dx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            out.col(dst) += x.col((b * h + iy) * w + ix);
            ++count;
          }
        }
        out.col(dst) /= static_cast<float>(count);
      }
    }
  }
  return out;
}

}  // namespace

TinyNet instantiate(const Architecture& arch, std::uint64_t seed, TensorShape probe,
                    bool per_activation) {
  if (probe.height < 1 || probe.width < 1 || probe.channels < 1) {
    throw std::invalid_argument("probe shape must be positive");
  }
  TinyNet net;
  net.arch_id = arch.id();
  net.probe = probe;
  net.per_activation = per_activation;
  net.graph = lower(arch, {probe.height, probe.width, arch.initial_input_channels()});

  const std::uint64_t base = mix_seed(seed, arch.id());
  net.stem = make_conv(probe.channels, arch.initial_input_channels(), 3, 1, mix_seed(base, 0));
  net.op_weights.resize(net.graph.ops.size());
  for (std::size_t i = 0; i < net.graph.ops.size(); ++i) {
    const LoweredOp& op = net.graph.ops[i];
    if (op.kind != LoweredKind::kConv) continue;
    const KernelConfig& k = op.kernel;
    net.op_weights[i] = make_conv(k.in_channels, k.out_channels, k.kernel_size, k.stride,
                                  mix_seed(base, i + 1));
    net.relu_unit_count +=
        per_activation ? k.out_channels * k.out_height() * k.out_width() : k.out_channels;
  }
  return net;
}

ProbeBatch make_probe(int batch, TensorShape shape, std::uint64_t seed) {
  if (batch < 2) throw std::invalid_argument("probe batch needs >= 2 inputs");
  ProbeBatch p{batch, shape, FeatureMap(shape.channels, batch * shape.height * shape.width)};
  Rng rng(mix_seed(seed, "probe"));
  std::normal_distribution<float> normal(0.0F, 1.0F);
  for (Eigen::Index c = 0; c < p.data.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.data.rows(); ++r) p.data(r, c) = normal(rng);
  }
  return p;
}

ActivationCodes activation_codes(const TinyNet& net, const ProbeBatch& probe) {
  if (probe.shape != net.probe) throw std::invalid_argument("probe shape does not match the net");
  const int batch = probe.batch;
  const auto& g = net.graph;

  std::vector<FeatureMap> tensors(g.tensors.size());
  std::vector<bool> ready(g.tensors.size(), false);
  tensors[g.input] = conv2d(net.stem, probe.data, batch, probe.shape.height, probe.shape.width);
  batch_norm(tensors[g.input], batch);
  ready[g.input] = true;

  ActivationCodes out;
  out.codes = Eigen::MatrixXd::Zero(batch, net.relu_unit_count);
  int unit = 0;

  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    const LoweredOp& op = g.ops[i];
    const TensorShape& in = g.tensors[op.src];
    const FeatureMap& x = tensors[op.src];
    FeatureMap y;
    switch (op.kind) {
      case LoweredKind::kConv: {
        y = conv2d(net.op_weights[i], x, batch, in.height, in.width);
        batch_norm(y, batch);
        const TensorShape& o = g.tensors[op.dst];
        const int spatial = o.height * o.width;
        for (int b = 0; b < batch; ++b) {
          const auto block = y.middleCols(static_cast<Eigen::Index>(b) * spatial, spatial);
          if (net.per_activation) {
            for (Eigen::Index c = 0; c < block.rows(); ++c) {
              for (int p = 0; p < spatial; ++p) {
                out.codes(b, unit + c * spatial + p) = block(c, p) > 0.0F ? 1.0 : 0.0;
              }
            }
          } else {
            const Eigen::VectorXf means = block.rowwise().mean();
            for (Eigen::Index c = 0; c < means.size(); ++c) {
              out.codes(b, unit + c) = means[c] > 0.0F ? 1.0 : 0.0;
            }
          }
        }
        unit += static_cast<int>(y.rows()) * (net.per_activation ? spatial : 1);
        y = y.cwiseMax(0.0F);
        break;
      }
      case LoweredKind::kAvgPool:
        y = avg_pool3(x, batch, in.height, in.width);
        break;
      case LoweredKind::kSkip:
        y = x;
        break;
    }
    if (ready[op.dst]) {
      tensors[op.dst] += y;
    } else {
      tensors[op.dst] = std::move(y);
      ready[op.dst] = true;
    }
  }
  return out;
}

Eigen::MatrixXd code_kernel(const ActivationCodes& codes) {
  const Eigen::MatrixXd& c = codes.codes;
  const Eigen::MatrixXd inv = Eigen::MatrixXd::Ones(c.rows(), c.cols()) - c;
  return c * c.transpose() + inv * inv.transpose();
}

ProxyScore naswot_score(const ActivationCodes& codes) {
  if (codes.batch() < 2) throw std::invalid_argument("naswot_score needs a batch of >= 2");
  // Rows in lexicographic order make the determinant bit-identical under any
  // reordering of the batch.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(codes.batch()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  const Eigen::MatrixXd& c = codes.codes;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::lexicographical_compare(c.row(a).begin(), c.row(a).end(), c.row(b).begin(), c.row(b).end());
  });
  ActivationCodes sorted;
  sorted.codes.resize(c.rows(), c.cols());
  for (std::size_t i = 0; i < order.size(); ++i) sorted.codes.row(static_cast<Eigen::Index>(i)) = c.row(order[i]);
  const Eigen::MatrixXd k = code_kernel(sorted);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
  if (lu.rank() < k.rows()) return {};
  const Eigen::LLT<Eigen::MatrixXd> llt(k);
  double logdet = 0.0;
  if (llt.info() == Eigen::Success) {
    logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  } else {
    logdet = lu.matrixLU().diagonal().array().abs().log().sum();
  }
  return {logdet, true};
}

ProxyScore naswot_proxy(const Architecture& arch, const NaswotConfig& config) {
  const TinyNet net = instantiate(arch, config.weight_seed, config.probe, config.per_activation);
  return naswot_score(activation_codes(net, make_probe(config.batch, config.probe, config.probe_seed)));
}

}  // namespace hwnas
