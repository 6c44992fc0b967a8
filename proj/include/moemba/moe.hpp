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

// Noisy top-k mixture of Mamba experts with balance and z regularizers.

#pragma once

#include <vector>

#include "moemba/rng.hpp"
#include "moemba/ssm.hpp"
#include "moemba/tensor.hpp"

namespace moemba::moe {

struct MoeConfig {
  std::size_t experts = 2;  // eta
  std::size_t top_k = 2;
  double lambda_b = 0.01;
  double lambda_z = 0.001;
  std::size_t layers = 1;
  bool sparse_dispatch = true;  // false evaluates every expert on every token

  void validate() const;
};

struct MoeLayerParams {
  std::vector<ssm::MambaParams> experts;
  Tensor w_gate;   // [D_model, eta]
  Tensor w_noise;  // [D_model, eta]

  std::vector<Tensor> tensors() const;
};

MoeLayerParams init_moe_layer(const MoeConfig& config, const ssm::MambaConfig& expert,
                              Rng& rng);

struct GateDecision {
  Tensor weights;          // [M, eta], at most k nonzeros per row
  std::vector<bool> mask;  // [M, eta], selected experts
  Tensor clean;            // z W_gate
  Tensor noise_scale;      // softplus(z W_noise)
  Tensor logits;           // H = clean + eps * noise_scale (eps = 0 in eval)
  Tensor load;             // [eta]; smooth estimate in training, counts in eval
  Tensor balance;          // lambda_B * CV(load)^2
  Tensor z;                // mean over tokens of logsumexp(H)^2
};

// Top-k selection per row; ties go to the lower expert index.
std::vector<bool> top_k_mask(const Tensor& logits, std::size_t k);

// tokens = [M, D_model]. `noise_rng` is required when training.
GateDecision gate(const Tensor& tokens, const MoeLayerParams& params, const MoeConfig& config,
                  bool training, Rng* noise_rng);

// Load_i = sum_m Phi((clean_mi - kth_excluding_i(H_m)) / sigma_mi), the
// probability that expert i stays in the top k when only its own noise is
// redrawn. Exactly M per expert when k equals the expert count.
Tensor load_estimate(const Tensor& clean, const Tensor& logits, const Tensor& noise_scale,
                     std::size_t k);

// Per-expert count of selected tokens.
Tensor hard_load(const std::vector<bool>& mask, std::size_t experts);

// lambda_B * CV(load)^2 with population variance; 0 for an all-zero load.
Tensor balance_loss(const Tensor& load, double lambda_b);

// (1/M) sum_m logsumexp(logits_m)^2.
Tensor z_loss(const Tensor& logits);

struct MoeOutput {
  Tensor output;  // same shape as the input
  GateDecision gate;
  Tensor aux;     // balance + lambda_Z * z
};

// x = [B, L, D_model]; each patch is routed as one token using its mean
// over L. Only selected experts run on a patch unless sparse_dispatch is off.
MoeOutput moe_forward(const Tensor& x, const MoeLayerParams& params, const MoeConfig& config,
                      bool training, Rng* noise_rng);

}  // namespace moemba::moe
