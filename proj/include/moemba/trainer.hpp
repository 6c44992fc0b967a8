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

// Training loop: loss, schedule, Adam, epochs, checkpoints and evaluation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "moemba/head.hpp"
#include "moemba/model.hpp"
#include "moemba/rng.hpp"
#include "moemba/sigproc.hpp"
#include "moemba/tensor.hpp"

namespace moemba::trainer {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr0 = 1e-4;
  double lr_min = 0.0;
  std::string schedule = "cosine";  // or "constant"
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double clip_norm = 1.0;     // global gradient norm; 0 disables
  // Patches drawn per recording each epoch; 0 uses every patch.
  std::size_t patches_per_recording = 0;
  // Held-out patches scored after each epoch; 0 skips validation.
  std::size_t val_patches = 0;

  void validate() const;
};

// lr_min + (lr0 - lr_min) (1 + cos(pi t / T)) / 2 for 0 <= t <= T.
double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min);

// Cross-entropy of `probs` [B, G] against labels, plus `aux` when defined.
Tensor total_loss(const Tensor& probs, const std::vector<std::size_t>& labels, const Tensor& aux);

// Scales every gradient by max_norm / norm when the global norm exceeds
// max_norm. Returns the norm before clipping.
double clip_gradients(const std::vector<Tensor>& params, double max_norm);

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor> params, double beta1, double beta2, double eps,
       double weight_decay = 0.0);

  // One update from the parameters' current gradients.
  void step(double lr);

  std::size_t steps() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  void set_steps(std::size_t t) { t_ = t; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, weight_decay_ = 0.0;
  std::size_t t_ = 0;
};

// Flat view of patch sets. Signal s is the s-th set.
struct PatchIndex {
  std::vector<Tensor> patches;  // each [L, V]
  std::vector<std::size_t> labels;
  std::vector<std::size_t> signal;
  std::vector<std::size_t> signal_labels;

  std::size_t size() const { return patches.size(); }
};

PatchIndex flatten(const std::vector<sigproc::PatchSet>& sets);

// Copies the selected patches into one [B, L, V] tensor.
Tensor stack(const PatchIndex& data, const std::vector<std::size_t>& rows);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;        // at the epoch's first step
  double train_loss = 0.0;
  double train_acc = 0.0;  // running accuracy on training batches
  double val_acc = -1.0;   // -1 when validation is off
  std::vector<double> load_share;  // selected-token share per expert
  std::vector<double> step_losses;
};

struct TrainState {
  MoembaModel model;
  Adam optimizer;
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed steps
  Rng shuffle_rng;
  Rng noise_rng;
  std::vector<EpochRecord> history;
};

TrainState start_training(const ModelConfig& model, const TrainConfig& config);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs epochs until state.epoch == min(until_epoch, config.epochs). Throws
// NumericalError naming the epoch, batch and parameter norms if the loss or
// a gradient stops being finite.
void run_epochs(TrainState& state, const TrainConfig& config, const PatchIndex& train,
                const PatchIndex* val, std::size_t until_epoch,
                const EpochCallback& on_epoch = {});

TrainState train(const ModelConfig& model, const TrainConfig& config, const PatchIndex& train,
                 const PatchIndex* val = nullptr, const EpochCallback& on_epoch = {});

// Eval-mode class probabilities per patch.
std::vector<head::Probabilities> predict(const MoembaModel& model, const PatchIndex& data,
                                         std::size_t batch_size = 64);

double patch_accuracy(const MoembaModel& model, const PatchIndex& data,
                      std::size_t batch_size = 64);

// Signal-level and patch-level metrics plus parameter and FLOP counts.
head::EvalReport evaluate_model(const MoembaModel& model, const PatchIndex& data,
                                std::size_t batch_size = 64);

void write_history_csv(const std::vector<EpochRecord>& history,
                       const std::filesystem::path& path);

// --- checkpoints ------------------------------------------------------------
//
// "MEMC", u32 version, u32 + config text, u64 epoch, u64 step, u64 adam
// steps, two rng states (u32 + text each), u32 tensor count, then per tensor
// u32 + name, u32 rank, u64 dims, f64 values, f64 first and second moments;
// u32 history count and the records. Little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const std::string& config_text);
// Config text stored in a checkpoint.
std::string checkpoint_config(const std::filesystem::path& path);
// Restores into a state built by start_training from the same config.
// Throws FormatError on corruption, ConfigError on tensor mismatch; the
// state is untouched when it throws.
void load_checkpoint(const std::filesystem::path& path, TrainState& state);

}  // namespace moemba::trainer
