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

// The assembled classifier: wavelet features, a per-step token embedding,
// stacked mixture-of-Mamba layers and the head. Plus analytic counters.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "moemba/head.hpp"
#include "moemba/moe.hpp"
#include "moemba/rng.hpp"
#include "moemba/ssm.hpp"
#include "moemba/tensor.hpp"
#include "moemba/wtfm.hpp"

namespace moemba::trainer {

struct ModelConfig {
  std::size_t window = 64;    // L
  std::size_t channels = 16;  // V
  std::size_t classes = 8;    // G
  // Pointwise mix of the fused wavelet channels before the token embedding.
  std::size_t mix_channels = 1;
  wtfm::WtfmConfig wtfm;
  ssm::MambaConfig mamba;  // mamba.d_model is the token width
  moe::MoeConfig moe;

  void validate() const;
};

struct MoembaModel {
  ModelConfig config;
  wtfm::WtfmParams wtfm;
  Tensor mix;      // [M, C, 1, 1]
  Tensor w_embed;  // [M * V, D_model]
  Tensor b_embed;  // [D_model]
  std::vector<moe::MoeLayerParams> layers;
  head::HeadParams head;

  // Stable names, e.g. "moe.0.expert.1.w_in".
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  std::vector<Tensor> tensors() const;
};

// Draws every weight from the init stream of `seed`.
MoembaModel init_model(const ModelConfig& config, std::uint64_t seed);

struct ForwardResult {
  Tensor probs;  // [B, G]
  Tensor aux;    // scalar, sum over layers of balance + lambda_Z * z
  std::vector<moe::GateDecision> gates;  // one per layer
};

// patches = [B, L, V]. `noise_rng` is required when training.
ForwardResult forward(const MoembaModel& model, const Tensor& patches, bool training,
                      Rng* noise_rng);

// Exact sum of parameter entries.
std::size_t count_params(const MoembaModel& model);

struct FlopBreakdown {
  std::uint64_t wtfm = 0;
  std::uint64_t embed = 0;
  std::uint64_t gate = 0;
  std::uint64_t experts = 0;
  std::uint64_t head = 0;

  std::uint64_t total() const { return wtfm + embed + gate + experts + head; }
};

// One forward pass of one patch, one multiply-accumulate = 2 FLOPs. Only
// the k selected experts of each layer are counted.
FlopBreakdown count_flops(const ModelConfig& config);
std::uint64_t mamba_flops(const ssm::MambaConfig& config, std::size_t steps);

// FNV-1a over every parameter value, in named order.
std::uint64_t parameter_checksum(const MoembaModel& model);

}  // namespace moemba::trainer
