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

#include "moemba/model.hpp"

#include <bit>
#include <cstring>

#include "moemba/errors.hpp"
#include "moemba/init.hpp"
#include "moemba/ops.hpp"

namespace moemba::trainer {

void ModelConfig::validate() const {
  if (window < 2 || channels < 1) throw ConfigError("patch must be at least 2 x 1");
  if (classes < 2) throw ConfigError("classes = " + std::to_string(classes) + ", need >= 2");
  if (mix_channels < 1) throw ConfigError("mix_channels must be >= 1");
  wtfm.validate();
  mamba.validate();
  moe.validate();
}

std::vector<std::pair<std::string, Tensor>> MoembaModel::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("wtfm.small_kernels", wtfm.small_kernels);
  out.emplace_back("wtfm.large_kernels", wtfm.large_kernels);
  for (std::size_t i = 0; i < wtfm.w1.size(); ++i) {
    out.emplace_back("wtfm.w1." + std::to_string(i), wtfm.w1[i]);
    out.emplace_back("wtfm.w2." + std::to_string(i), wtfm.w2[i]);
  }
  out.emplace_back("wtfm.value_embed", wtfm.value_embed);
  out.emplace_back("embed.mix", mix);
  out.emplace_back("embed.w", w_embed);
  out.emplace_back("embed.b", b_embed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string layer = "moe." + std::to_string(l) + ".";
    for (std::size_t e = 0; e < layers[l].experts.size(); ++e) {
      const auto& m = layers[l].experts[e];
      const std::string p = layer + "expert." + std::to_string(e) + ".";
      out.emplace_back(p + "w_in", m.w_in);
      out.emplace_back(p + "conv_kernel", m.conv_kernel);
      out.emplace_back(p + "conv_bias", m.conv_bias);
      out.emplace_back(p + "a_log", m.core.a_log);
      out.emplace_back(p + "w_b", m.core.w_b);
      out.emplace_back(p + "w_c", m.core.w_c);
      out.emplace_back(p + "w_delta", m.core.w_delta);
      out.emplace_back(p + "d_skip", m.core.d_skip);
      out.emplace_back(p + "w_out", m.w_out);
    }
    out.emplace_back(layer + "w_gate", layers[l].w_gate);
    out.emplace_back(layer + "w_noise", layers[l].w_noise);
  }
  out.emplace_back("head.gamma", head.gamma);
  out.emplace_back("head.beta", head.beta);
  out.emplace_back("head.w", head.w);
  out.emplace_back("head.b", head.b);
  return out;
}

std::vector<Tensor> MoembaModel::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

MoembaModel init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed, Stream::kInit);
  MoembaModel m;
  m.config = config;
  m.wtfm = wtfm::init_wtfm(config.wtfm, rng);
  const std::size_t c = config.wtfm.channels(), mix = config.mix_channels;
  const std::size_t d = config.mamba.d_model;
  m.mix = fan_in_parameter({mix, c, 1, 1}, c, rng);
  m.w_embed = fan_in_parameter({mix * config.channels, d}, mix * config.channels, rng);
  m.b_embed = Tensor::parameter({d}, std::vector<double>(d, 0.0));
  for (std::size_t l = 0; l < config.moe.layers; ++l) {
    m.layers.push_back(moe::init_moe_layer(config.moe, config.mamba, rng));
  }
  m.head = head::init_head(d, config.classes, rng);
  return m;
}

ForwardResult forward(const MoembaModel& model, const Tensor& patches, bool training,
                      Rng* noise_rng) {
  const auto& cfg = model.config;
  if (patches.rank() != 3 || patches.dim(1) != cfg.window || patches.dim(2) != cfg.channels) {
    throw DimensionError("model expects patches [B, " + std::to_string(cfg.window) + ", " +
                         std::to_string(cfg.channels) + "], got " + shape_str(patches.shape()));
  }
  const std::size_t nb = patches.dim(0), l = cfg.window, v = cfg.channels;
  const std::size_t mix = cfg.mix_channels, d = cfg.mamba.d_model;

  const Tensor z = wtfm::wtfm_forward(patches, model.wtfm, cfg.wtfm);  // [B, C, L, V]
  Tensor t = ops::conv2d(z, model.mix);                                // [B, M, L, V]
  t = ops::reshape(ops::transpose(t, 1, 2), {nb * l, mix * v});
  t = ops::add(ops::matmul(t, model.w_embed), ops::repeat_leading(model.b_embed, nb * l));
  t = ops::reshape(t, {nb, l, d});

  ForwardResult out;
  for (const auto& layer : model.layers) {
    moe::MoeOutput m = moe::moe_forward(t, layer, cfg.moe, training, noise_rng);
    t = m.output;
    out.aux = out.aux.defined() ? ops::add(out.aux, m.aux) : m.aux;
    out.gates.push_back(std::move(m.gate));
  }
  out.probs = head::classify_patch(ops::mean_axis(t, 1), model.head);
  return out;
}

std::size_t count_params(const MoembaModel& model) {
  std::size_t n = 0;
  for (const auto& t : model.tensors()) n += t.numel();
  return n;
}

std::uint64_t mamba_flops(const ssm::MambaConfig& c, std::size_t steps) {
  const std::uint64_t t = steps, d = c.d_model, di = c.d_inner(), n = c.d_state,
                      w = c.conv_width;
  std::uint64_t f = 0;
  f += 2 * t * d * 2 * di;         // in_proj
  f += 2 * t * di * w + t * di;    // causal conv + bias
  f += 2 * t * di;                 // silu on both branches
  f += 2 * 2 * t * n * di;         // B_t, C_t projections
  f += 2 * t * di + t;             // delta_t
  f += 9 * t * di * n;             // discretize + recurrence + readout
  f += 2 * t * di;                 // skip
  f += t * di;                     // output gate
  f += 2 * t * di * d;             // out_proj
  f += t * d;                      // residual
  return f;
}

FlopBreakdown count_flops(const ModelConfig& config) {
  config.validate();
  const std::uint64_t l = config.window, v = config.channels, lv = l * v;
  const auto& w = config.wtfm;
  const std::uint64_t e = w.embed, ec = w.chan_embed, r = w.hidden();
  const std::uint64_t ks = w.small_kernel, kl = w.large_kernel;
  const std::uint64_t components = w.approximation_only ? 1 : 4;
  const std::uint64_t coeffs = e * ((l + 1) / 2) * ((v + 1) / 2);

  FlopBreakdown f;
  f.wtfm += 2 * e * ks * ks * lv + 2 * e * kl * kl * lv;  // two conv paths
  f.wtfm += 4 * 4 * coeffs;                               // Haar analysis
  f.wtfm += components * 2 * 16 * e * lv;                 // bicubic, 16 taps
  if (!w.unit_attention) {
    f.wtfm += components * (e * lv + 4 * r * e + r + e);  // gmp, W1, relu, W2, sigmoid
  }
  f.wtfm += components * e * lv;                          // scaling
  f.wtfm += (components - 1) * e * lv + e * lv;           // sum + Hadamard
  f.wtfm += 2 * ec * w.value_embed_width * lv;

  const std::uint64_t c = w.channels(), mix = config.mix_channels, d = config.mamba.d_model;
  f.embed = 2 * c * mix * lv + 2 * l * mix * v * d + l * d;

  const std::uint64_t eta = config.moe.experts, k = config.moe.top_k;
  for (std::size_t layer = 0; layer < config.moe.layers; ++layer) {
    f.gate += l * d + 2 * 2 * d * eta + eta + 3 * k;
    f.experts += k * (mamba_flops(config.mamba, l) + l * d) + (k - 1) * l * d;
  }
  const std::uint64_t g = config.classes;
  f.head = l * d + 5 * d + 2 * d + d + 2 * d * g + g + 3 * g;
  return f;
}

std::uint64_t parameter_checksum(const MoembaModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : model.named_tensors()) {
    for (char ch : name) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
    for (double x : t.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(x);
      for (int b = 0; b < 8; ++b) h = (h ^ ((bits >> (8 * b)) & 0xff)) * 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace moemba::trainer
