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

// Classification head, patch-to-signal voting and evaluation metrics.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "moemba/rng.hpp"
#include "moemba/tensor.hpp"

namespace moemba::head {

struct HeadParams {
  Tensor gamma;  // [D]
  Tensor beta;   // [D]
  Tensor w;      // [D, G]
  Tensor b;      // [G]

  std::size_t classes() const { return w.dim(1); }
  std::vector<Tensor> tensors() const { return {gamma, beta, w, b}; }
};

// gamma = 1, beta = 0, b = 0. Throws ConfigError for fewer than two classes.
HeadParams init_head(std::size_t d_model, std::size_t classes, Rng& rng);

// proj(silu(layer_norm(z) * gamma + beta)); z = [D] -> [G] or [B, D] -> [B, G].
Tensor head_logits(const Tensor& z, const HeadParams& params);
// softmax of head_logits.
Tensor classify_patch(const Tensor& z, const HeadParams& params);

using Probabilities = std::vector<double>;

std::size_t argmax(const Probabilities& p);

struct SignalVote {
  std::size_t source_id = 0;
  std::size_t label = 0;        // winning class
  std::size_t patches = 0;
  std::vector<std::size_t> votes;  // per class
  Probabilities mean_probs;        // average over the signal's patches
};

// Each patch votes its argmax; the modal class wins. Ties go to the higher
// summed probability over the signal's patches, then the lower class.
// Output is ordered by source id.
std::vector<SignalVote> majority_vote(const std::vector<Probabilities>& patch_probs,
                                      const std::vector<std::size_t>& source_ids);
// As above, but every id in [0, n_signals) must own a patch (DataError).
std::vector<SignalVote> majority_vote(const std::vector<Probabilities>& patch_probs,
                                      const std::vector<std::size_t>& source_ids,
                                      std::size_t n_signals);

struct Confusion {
  std::vector<std::vector<std::size_t>> counts;  // [true][predicted]
  double total_accuracy = 0.0;
  double balanced_accuracy = 0.0;  // mean recall over classes present
  std::vector<std::optional<double>> recall;
};

// Throws DataError for a label or prediction >= classes.
Confusion confusion_and_accuracy(const std::vector<std::size_t>& preds,
                                 const std::vector<std::size_t>& labels, std::size_t classes);

// Mann-Whitney AUC with average ranks for ties. Empty when either side is
// absent.
std::optional<double> roc_auc(const std::vector<double>& scores,
                              const std::vector<bool>& positive);
// One-vs-rest AUC of class g.
std::optional<double> roc_auc(const std::vector<Probabilities>& scores,
                              const std::vector<std::size_t>& labels, std::size_t g);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

// One point per distinct score (descending), preceded by (+inf, 0, 0).
std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                 const std::vector<bool>& positive);

struct EvalReport {
  std::size_t classes = 0;
  std::size_t signals = 0;
  std::size_t patches = 0;
  // Signal level (after voting).
  Confusion confusion;
  std::vector<std::optional<double>> auc;
  std::vector<std::vector<RocPoint>> roc;
  // Patch level.
  double patch_accuracy = 0.0;
  double patch_balanced_accuracy = 0.0;
  std::size_t param_count = 0;
  std::uint64_t flop_count = 0;
};

// patch_probs[p] belongs to signal patch_source[p]; signal s has label
// signal_labels[s]. AUC uses each signal's mean patch probabilities.
EvalReport evaluate(const std::vector<Probabilities>& patch_probs,
                    const std::vector<std::size_t>& patch_source,
                    const std::vector<std::size_t>& signal_labels, std::size_t classes);

// JSON object text. `extra_json` (an object, possibly empty) is merged in.
std::string report_json(const EvalReport& report, const std::string& extra_json = "{}");
void write_confusion_csv(const EvalReport& report, const std::filesystem::path& path);
void write_roc_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace moemba::head
