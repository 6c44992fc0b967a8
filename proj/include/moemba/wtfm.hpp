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

// Wavelet feature modulation: dual-scale convolutions, a Haar split of the
// fine scale, per-component channel attention, and fusion with a per-
// electrode value embedding.

#pragma once

#include <string>
#include <vector>

#include "moemba/rng.hpp"
#include "moemba/tensor.hpp"

namespace moemba::wtfm {

struct WtfmConfig {
  std::size_t embed = 8;        // E, channels of each conv path
  std::size_t chan_embed = 8;   // E_chan, channels of the value embedding
  std::size_t small_kernel = 3;
  std::size_t large_kernel = 7;
  std::size_t reduction = 0;    // r; 0 means E / 2
  std::size_t value_embed_width = 1;
  bool shared_attention = true;  // one (W1, W2) for all four components
  std::string wavelet = "haar";
  // Ablation switches.
  bool unit_attention = false;     // alpha == 1
  bool approximation_only = false; // detail components dropped

  std::size_t hidden() const { return reduction == 0 ? embed / 2 : reduction; }
  std::size_t channels() const { return 2 * embed + chan_embed; }
  // Throws ConfigError.
  void validate() const;
};

struct WtfmParams {
  Tensor small_kernels;    // [E, 1, k, k]
  Tensor large_kernels;    // [E, 1, K, K]
  std::vector<Tensor> w1;  // 1 or 4 of [r, E]
  std::vector<Tensor> w2;  // 1 or 4 of [E, r]
  Tensor value_embed;      // [E_chan, 1, w, 1]

  std::vector<Tensor> tensors() const;
};

WtfmParams init_wtfm(const WtfmConfig& config, Rng& rng);

// Each component is [..., ceil(L/2), ceil(V/2)].
struct WaveletComponents {
  Tensor cA, cH, cV, cD;

  const Tensor& operator[](std::size_t i) const;
};

// Single-level orthonormal Haar analysis over the two trailing axes. For a
// block [[a, b], [c, d]]: cA = (a+b+c+d)/2, cH = (a+b-c-d)/2,
// cV = (a-b+c-d)/2, cD = (a-b-c+d)/2. An odd trailing extent is padded by
// reflecting one row or column.
WaveletComponents dwt2_haar(const Tensor& f);

// Bicubic resampling of the two trailing axes to out_h x out_w with the
// a = -0.5 kernel, half-pixel centres and edge clamping.
Tensor upsample_bicubic(const Tensor& c, std::size_t out_h, std::size_t out_w);
inline Tensor upsample_bicubic(const Tensor& c, std::size_t factor = 2) {
  return upsample_bicubic(c, c.dim(c.rank() - 2) * factor, c.dim(c.rank() - 1) * factor);
}

// alpha = sigmoid(W2 relu(W1 gmp(c))) for c = [E, H, W] -> [E], or
// [B, E, H, W] -> [B, E].
Tensor channel_attention(const Tensor& c, const Tensor& w1, const Tensor& w2);

// c_e <- alpha_e * c_e.
Tensor scale_channels(const Tensor& c, const Tensor& alpha);

// Z = concat(F_large * M, F_small, value_embed(P)) along channels.
// P = [L, V] -> [C, L, V], or [B, L, V] -> [B, C, L, V].
Tensor wtfm_forward(const Tensor& patch, const WtfmParams& params,
                    const WtfmConfig& config);

// Haar components of F_small for inspection.
WaveletComponents wtfm_components(const Tensor& patch, const WtfmParams& params);

// Modulation map M = sum_k alpha_k * up(c_k), same shape as F_large.
Tensor modulation_map(const Tensor& f_small, const WtfmParams& params,
                      const WtfmConfig& config);

}  // namespace moemba::wtfm
