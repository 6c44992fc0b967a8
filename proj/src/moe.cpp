/*
 * Copyright 2026 The moemba Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "moemba/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "moemba/errors.hpp"
#include "moemba/init.hpp"
#include "moemba/ops.hpp"

namespace moemba::moe {

using detail::grad_of;
using detail::make_result;
using detail::Node;

void MoeConfig::validate() const {
  if (experts == 0) throw ConfigError("moe needs at least one expert");
  if (top_k < 1 || top_k > experts) {
    throw ConfigError("top_k = " + std::to_string(top_k) + " must lie in [1, " +
                      std::to_string(experts) + "]");
  }
  if (layers == 0) throw ConfigError("moe needs at least one layer");
  if (lambda_b < 0 || lambda_z < 0) throw ConfigError("loss scales must be non-negative");
}

std::vector<Tensor> MoeLayerParams::tensors() const {
  std::vector<Tensor> out;
  for (const auto& e : experts)
    for (const auto& t : e.tensors()) out.push_back(t);
  out.push_back(w_gate);
  out.push_back(w_noise);
  return out;
}

MoeLayerParams init_moe_layer(const MoeConfig& config, const ssm::MambaConfig& expert,
                              Rng& rng) {
  config.validate();
  MoeLayerParams p;
  for (std::size_t i = 0; i < config.experts; ++i) p.experts.push_back(ssm::init_mamba(expert, rng));
  p.w_gate = fan_in_parameter({expert.d_model, config.experts}, expert.d_model, rng);
  p.w_noise = fan_in_parameter({expert.d_model, config.experts}, expert.d_model, rng);
  return p;
}

std::vector<bool> top_k_mask(const Tensor& logits, std::size_t k) {
  if (logits.rank() != 2) throw DimensionError("top_k_mask expects [M, eta]");
  const std::size_t m = logits.dim(0), n = logits.dim(1);
  std::vector<bool> mask(m * n, false);
  std::vector<std::size_t> order(n);
  const auto d = logits.data();
  for (std::size_t r = 0; r < m; ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d[r * n + a] > d[r * n + b]; });
    for (std::size_t j = 0; j < std::min(k, n); ++j) mask[r * n + order[j]] = true;
  }
  return mask;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

constexpr double kMinNoiseScale = 1e-12;

}  // namespace

Tensor load_estimate(const Tensor& clean, const Tensor& logits, const Tensor& noise_scale,
                     std::size_t k) {
  if (clean.rank() != 2 || clean.shape() != logits.shape() ||
      clean.shape() != noise_scale.shape()) {
    throw DimensionError("load_estimate: clean, logits and noise scale must share [M, eta]");
  }
  const std::size_t m = clean.dim(0), n = clean.dim(1);
  if (k < 1 || k > n) throw ConfigError("load_estimate: k out of range");

  // For each (token, expert): index of the threshold expert (the k-th largest
  // among the others) and the standardized margin. n marks "always in".
  std::vector<std::size_t> thr(m * n, n);
  std::vector<double> zs(m * n, 0.0);
  std::vector<double> load(n, 0.0);
  const auto c = clean.data(), h = logits.data(), s = noise_scale.data();
  std::vector<std::size_t> others;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = r * n + i;
      if (k == n) {
        load[i] += 1.0;
        continue;
      }
      others.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) others.push_back(j);
      std::nth_element(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k - 1),
                       others.end(), [&](std::size_t a, std::size_t b) {
                         return h[r * n + a] > h[r * n + b] ||
                                (h[r * n + a] == h[r * n + b] && a < b);
                       });
      thr[idx] = others[k - 1];
      const double sigma = std::max(s[idx], kMinNoiseScale);
      zs[idx] = (c[idx] - h[r * n + thr[idx]]) / sigma;
      load[i] += normal_cdf(zs[idx]);
    }

  return make_result({n}, std::move(load), {clean, logits, noise_scale},
                     [clean, logits, noise_scale, thr = std::move(thr), zs = std::move(zs), m,
                      n](const Node& o) {
                       auto gc = grad_of(clean);
                       auto gh = grad_of(logits);
                       auto gs = grad_of(noise_scale);
                       const auto s = noise_scale.data();
                       for (std::size_t r = 0; r < m; ++r)
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t idx = r * n + i;
                           if (thr[idx] == n) continue;
                           const double sigma = std::max(s[idx], kMinNoiseScale);
                           const double g = o.grad[i] * normal_pdf(zs[idx]) / sigma;
                           if (!gc.empty()) gc[idx] += g;
                           if (!gh.empty()) gh[r * n + thr[idx]] -= g;
                           if (!gs.empty() && s[idx] > kMinNoiseScale) gs[idx] -= g * zs[idx];
                         }
                     },
                     "load_estimate");
}

Tensor hard_load(const std::vector<bool>& mask, std::size_t experts) {
  std::vector<double> load(experts, 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) load[i % experts] += 1.0;
  return Tensor::from({experts}, std::move(load));
}

Tensor balance_loss(const Tensor& load, double lambda_b) {
  return ops::scale(ops::cv_squared(load), lambda_b);
}

Tensor z_loss(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("z_loss expects [M, eta]");
  return ops::mean(ops::square(ops::logsumexp(logits)));
}

GateDecision gate(const Tensor& tokens, const MoeLayerParams& params, const MoeConfig& config,
                  bool training, Rng* noise_rng) {
  if (tokens.rank() != 2 || tokens.dim(0) == 0) throw DimensionError("gate expects [M >= 1, D]");
  const std::size_t m = tokens.dim(0), n = config.experts;
  if (params.w_gate.shape() != Shape{tokens.dim(1), n}) {
    throw DimensionError("gate weights " + shape_str(params.w_gate.shape()) +
                         " do not match tokens " + shape_str(tokens.shape()));
  }
  GateDecision g;
  g.clean = ops::matmul(tokens, params.w_gate);
  g.noise_scale = ops::softplus(ops::matmul(tokens, params.w_noise));
  if (training) {
    if (noise_rng == nullptr) throw UsageError("training gate needs a noise stream");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> eps(m * n);
    for (double& e : eps) e = normal(*noise_rng);
    g.logits = ops::add(g.clean, ops::mul(Tensor::from({m, n}, std::move(eps)), g.noise_scale));
  } else {
    g.logits = g.clean;
  }
  g.mask = top_k_mask(g.logits, config.top_k);
  g.weights = ops::masked_softmax(g.logits, g.mask);
  g.load = training ? load_estimate(g.clean, g.logits, g.noise_scale, config.top_k)
                    : hard_load(g.mask, n);
  g.balance = balance_loss(g.load, config.lambda_b);
  g.z = z_loss(g.logits);
  return g;
}

MoeOutput moe_forward(const Tensor& x, const MoeLayerParams& params, const MoeConfig& config,
                      bool training, Rng* noise_rng) {
  if (x.rank() != 3) throw DimensionError("moe_forward expects [B, L, D]");
  if (params.experts.size() != config.experts) {
    throw DimensionError("moe layer holds " + std::to_string(params.experts.size()) +
                         " experts, config says " + std::to_string(config.experts));
  }
  const std::size_t nb = x.dim(0), n = config.experts;
  MoeOutput out;
  out.gate = gate(ops::mean_axis(x, 1), params, config, training, noise_rng);
  const Shape row_suffix{x.dim(1), x.dim(2)};

  for (std::size_t i = 0; i < n; ++i) {
    const Tensor weight = ops::column(out.gate.weights, i);
    Tensor contribution;
    if (config.sparse_dispatch) {
      std::vector<std::size_t> rows;
      for (std::size_t b = 0; b < nb; ++b)
        if (out.gate.mask[b * n + i]) rows.push_back(b);
      if (rows.empty()) continue;
      if (rows.size() == nb) {
        const Tensor y = ssm::mamba_block(x, params.experts[i]);
        contribution = ops::mul(y, ops::repeat_trailing(weight, row_suffix));
      } else {
        const Tensor y = ssm::mamba_block(ops::index_select(x, rows), params.experts[i]);
        const Tensor w = ops::index_select(weight, rows);
        contribution =
            ops::scatter_rows(ops::mul(y, ops::repeat_trailing(w, row_suffix)), rows, nb);
      }
    } else {
      const Tensor y = ssm::mamba_block(x, params.experts[i]);
      contribution = ops::mul(y, ops::repeat_trailing(weight, row_suffix));
    }
    out.output = out.output.defined() ? ops::add(out.output, contribution) : contribution;
  }
  out.aux = ops::add(out.gate.balance, ops::scale(out.gate.z, config.lambda_z));
  return out;
}

}  // namespace moemba::moe
