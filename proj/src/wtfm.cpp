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

#include "moemba/wtfm.hpp"

#include <array>
#include <cmath>

#include "moemba/errors.hpp"
#include "moemba/init.hpp"
#include "moemba/ops.hpp"

namespace moemba::wtfm {

using detail::grad_of;
using detail::make_result;
using detail::Node;

void WtfmConfig::validate() const {
  if (embed == 0 || chan_embed == 0) throw ConfigError("wtfm embeddings must be positive");
  if (small_kernel % 2 == 0 || large_kernel % 2 == 0 || value_embed_width % 2 == 0) {
    throw ConfigError("wtfm kernel sizes must be odd");
  }
  const std::size_t r = hidden();
  if (r == 0 || embed % r != 0) {
    throw ConfigError("attention width " + std::to_string(r) + " must divide E = " +
                      std::to_string(embed));
  }
  if (wavelet != "haar") throw ConfigError("unsupported wavelet '" + wavelet + "'");
}

std::vector<Tensor> WtfmParams::tensors() const {
  std::vector<Tensor> out{small_kernels, large_kernels};
  out.insert(out.end(), w1.begin(), w1.end());
  out.insert(out.end(), w2.begin(), w2.end());
  out.push_back(value_embed);
  return out;
}

WtfmParams init_wtfm(const WtfmConfig& config, Rng& rng) {
  config.validate();
  const std::size_t e = config.embed, r = config.hidden();
  const std::size_t ks = config.small_kernel, kl = config.large_kernel;
  WtfmParams p;
  p.small_kernels = fan_in_parameter({e, 1, ks, ks}, ks * ks, rng);
  p.large_kernels = fan_in_parameter({e, 1, kl, kl}, kl * kl, rng);
  const std::size_t groups = config.shared_attention ? 1 : 4;
  for (std::size_t g = 0; g < groups; ++g) {
    p.w1.push_back(fan_in_parameter({r, e}, e, rng));
    p.w2.push_back(fan_in_parameter({e, r}, r, rng));
  }
  p.value_embed = fan_in_parameter({config.chan_embed, 1, config.value_embed_width, 1},
                                   config.value_embed_width, rng);
  return p;
}

const Tensor& WaveletComponents::operator[](std::size_t i) const {
  switch (i) {
    case 0: return cA;
    case 1: return cH;
    case 2: return cV;
    case 3: return cD;
    default: throw DimensionError("wavelet component index out of range");
  }
}

namespace {

constexpr double kMaxAttentionLogit = 30.0;

// Reflect-pad index for one extra row/column.
std::size_t reflect(std::size_t i, std::size_t n) {
  if (i < n) return i;
  return n >= 2 ? 2 * n - 2 - i : n - 1;
}

Tensor haar_component(const Tensor& f, int sign_col, int sign_row, const char* name) {
  if (f.rank() < 2) throw DimensionError("dwt2_haar needs at least 2-D input");
  const Shape& s = f.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h == 0 || w == 0) throw DimensionError("dwt2_haar on empty map");
  const std::size_t h2 = (h + 1) / 2, w2 = (w + 1) / 2;
  const std::size_t outer = f.numel() / (h * w);
  Shape out_shape = s;
  out_shape[s.size() - 2] = h2;
  out_shape[s.size() - 1] = w2;

  // Signs of a, b, c, d in [[a, b], [c, d]].
  const std::array<double, 4> sign{0.5, 0.5 * sign_col, 0.5 * sign_row,
                                   0.5 * sign_col * sign_row};
  auto for_each = [=](auto&& fn) {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < h2; ++i)
        for (std::size_t j = 0; j < w2; ++j) {
          const std::size_t out = (o * h2 + i) * w2 + j;
          const std::size_t r0 = reflect(2 * i, h), r1 = reflect(2 * i + 1, h);
          const std::size_t c0 = reflect(2 * j, w), c1 = reflect(2 * j + 1, w);
          const std::size_t base = o * h * w;
          fn(out, std::array<std::size_t, 4>{base + r0 * w + c0, base + r0 * w + c1,
                                             base + r1 * w + c0, base + r1 * w + c1});
        }
  };

  const auto fd = f.data();
  std::vector<double> out(shape_numel(out_shape));
  for_each([&](std::size_t k, const std::array<std::size_t, 4>& idx) {
    double acc = 0.0;
    for (int t = 0; t < 4; ++t) acc += sign[t] * fd[idx[t]];
    out[k] = acc;
  });
  return make_result(std::move(out_shape), std::move(out), {f},
                     [f, sign, for_each](const Node& o) {
                       auto gf = grad_of(f);
                       for_each([&](std::size_t k, const std::array<std::size_t, 4>& idx) {
                         for (int t = 0; t < 4; ++t) gf[idx[t]] += sign[t] * o.grad[k];
                       });
                     },
                     name);
}

// Keys cubic convolution kernel with a = -0.5.
double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::vector<std::array<std::size_t, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

Taps bicubic_taps(std::size_t in, std::size_t out) {
  Taps t;
  t.index.resize(out);
  t.weight.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t y = 0; y < out; ++y) {
    const double src = (static_cast<double>(y) + 0.5) * ratio - 0.5;
    const double base = std::floor(src);
    for (int k = 0; k < 4; ++k) {
      const double pos = base + k - 1;
      const double clamped = std::clamp(pos, 0.0, static_cast<double>(in - 1));
      t.index[y][k] = static_cast<std::size_t>(clamped);
      t.weight[y][k] = cubic(src - pos);
    }
  }
  return t;
}

}  // namespace

WaveletComponents dwt2_haar(const Tensor& f) {
  return {haar_component(f, +1, +1, "haar_cA"), haar_component(f, +1, -1, "haar_cH"),
          haar_component(f, -1, +1, "haar_cV"), haar_component(f, -1, -1, "haar_cD")};
}

Tensor upsample_bicubic(const Tensor& c, std::size_t out_h, std::size_t out_w) {
  if (c.rank() < 2) throw DimensionError("upsample_bicubic needs at least 2-D input");
  const Shape& s = c.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h == 0 || w == 0 || out_h == 0 || out_w == 0) {
    throw DimensionError("upsample_bicubic on empty map");
  }
  const std::size_t outer = c.numel() / (h * w);
  Shape out_shape = s;
  out_shape[s.size() - 2] = out_h;
  out_shape[s.size() - 1] = out_w;
  const Taps ty = bicubic_taps(h, out_h), tx = bicubic_taps(w, out_w);

  auto for_each = [=](auto&& fn) {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
          const std::size_t k = (o * out_h + y) * out_w + x;
          for (int p = 0; p < 4; ++p)
            for (int q = 0; q < 4; ++q) {
              fn(k, (o * h + ty.index[y][p]) * w + tx.index[x][q],
                 ty.weight[y][p] * tx.weight[x][q]);
            }
        }
  };

  const auto cd = c.data();
  std::vector<double> out(shape_numel(out_shape), 0.0);
  for_each([&](std::size_t k, std::size_t src, double wt) { out[k] += wt * cd[src]; });
  return make_result(std::move(out_shape), std::move(out), {c},
                     [c, for_each](const Node& o) {
                       auto gc = grad_of(c);
                       for_each([&](std::size_t k, std::size_t src, double wt) {
                         gc[src] += wt * o.grad[k];
                       });
                     },
                     "upsample_bicubic");
}

Tensor channel_attention(const Tensor& c, const Tensor& w1, const Tensor& w2) {
  const bool batched = c.rank() == 4;
  if (!batched && c.rank() != 3) throw DimensionError("channel_attention expects [B,]E x H x W");
  const std::size_t e = c.dim(batched ? 1 : 0);
  if (w1.rank() != 2 || w1.dim(1) != e || w2.rank() != 2 || w2.dim(0) != e ||
      w2.dim(1) != w1.dim(0)) {
    throw DimensionError("channel_attention weights " + shape_str(w1.shape()) + ", " +
                         shape_str(w2.shape()) + " do not fit E = " + std::to_string(e));
  }
  Tensor pooled = ops::global_max_pool(c, 2);
  if (!batched) pooled = ops::reshape(pooled, {1, e});
  const Tensor hidden = ops::relu(ops::matmul(pooled, ops::transpose(w1, 0, 1)));
  // Clamping the logit keeps alpha strictly inside (0, 1) in double precision.
  const Tensor logit = ops::clamp(ops::matmul(hidden, ops::transpose(w2, 0, 1)),
                                  -kMaxAttentionLogit, kMaxAttentionLogit);
  Tensor alpha = ops::sigmoid(logit);
  return batched ? alpha : ops::reshape(alpha, {e});
}

Tensor scale_channels(const Tensor& c, const Tensor& alpha) {
  const Shape& s = c.shape();
  if (s.size() < 2) throw DimensionError("scale_channels needs spatial axes");
  return ops::mul(c, ops::repeat_trailing(alpha, {s[s.size() - 2], s[s.size() - 1]}));
}

Tensor modulation_map(const Tensor& f_small, const WtfmParams& params,
                      const WtfmConfig& config) {
  const Shape& s = f_small.shape();
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  const WaveletComponents comps = dwt2_haar(f_small);
  Tensor m;
  const std::size_t n_comp = config.approximation_only ? 1 : 4;
  for (std::size_t k = 0; k < n_comp; ++k) {
    Tensor up = upsample_bicubic(comps[k], h, w);
    if (!config.unit_attention) {
      const std::size_t g = params.w1.size() == 1 ? 0 : k;
      up = scale_channels(up, channel_attention(up, params.w1.at(g), params.w2.at(g)));
    }
    m = m.defined() ? ops::add(m, up) : up;
  }
  return m;
}

namespace {

Tensor as_batched_image(const Tensor& patch) {
  if (patch.rank() == 2) return ops::reshape(patch, {1, 1, patch.dim(0), patch.dim(1)});
  if (patch.rank() == 3) {
    return ops::reshape(patch, {patch.dim(0), 1, patch.dim(1), patch.dim(2)});
  }
  throw DimensionError("wtfm expects a [L x V] or [B x L x V] patch, got " +
                       shape_str(patch.shape()));
}

}  // namespace

Tensor wtfm_forward(const Tensor& patch, const WtfmParams& params, const WtfmConfig& config) {
  const Tensor x = as_batched_image(patch);
  const Tensor f_small = ops::conv2d(x, params.small_kernels);
  const Tensor f_large = ops::conv2d(x, params.large_kernels);
  const Tensor f_mod = ops::mul(f_large, modulation_map(f_small, params, config));
  const Tensor f_chan = ops::conv2d(x, params.value_embed);
  Tensor z = ops::concat({f_mod, f_small, f_chan}, 1);
  const std::size_t expected = 2 * params.small_kernels.dim(0) + params.value_embed.dim(0);
  if (z.dim(1) != expected || z.dim(2) != x.dim(2) || z.dim(3) != x.dim(3)) {
    throw DimensionError("wtfm produced " + shape_str(z.shape()));
  }
  if (patch.rank() == 2) z = ops::reshape(z, {z.dim(1), z.dim(2), z.dim(3)});
  return z;
}

WaveletComponents wtfm_components(const Tensor& patch, const WtfmParams& params) {
  return dwt2_haar(ops::conv2d(as_batched_image(patch), params.small_kernels));
}

}  // namespace moemba::wtfm
