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

#include "moemba/head.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "json.hpp"
#include "moemba/errors.hpp"
#include "moemba/init.hpp"
#include "moemba/ops.hpp"

namespace moemba::head {

HeadParams init_head(std::size_t d_model, std::size_t classes, Rng& rng) {
  if (classes < 2) throw ConfigError("the head needs at least two classes");
  HeadParams p;
  p.gamma = Tensor::parameter({d_model}, std::vector<double>(d_model, 1.0));
  p.beta = Tensor::parameter({d_model}, std::vector<double>(d_model, 0.0));
  p.w = fan_in_parameter({d_model, classes}, d_model, rng);
  p.b = Tensor::parameter({classes}, std::vector<double>(classes, 0.0));
  return p;
}

Tensor head_logits(const Tensor& z, const HeadParams& params) {
  const bool single = z.rank() == 1;
  const Tensor x = single ? ops::reshape(z, {1, z.dim(0)}) : z;
  if (x.rank() != 2 || x.dim(1) != params.gamma.dim(0)) {
    throw DimensionError("head expects [B, " + std::to_string(params.gamma.dim(0)) + "], got " +
                         shape_str(z.shape()));
  }
  const std::size_t nb = x.dim(0);
  Tensor h = ops::layer_norm(x, 1);
  h = ops::add(ops::mul(h, ops::repeat_leading(params.gamma, nb)),
               ops::repeat_leading(params.beta, nb));
  Tensor logits = ops::add(ops::matmul(ops::silu(h), params.w), ops::repeat_leading(params.b, nb));
  return single ? ops::reshape(logits, {params.classes()}) : logits;
}

Tensor classify_patch(const Tensor& z, const HeadParams& params) {
  const Tensor logits = head_logits(z, params);
  return ops::softmax(logits, logits.rank() - 1);
}

std::size_t argmax(const Probabilities& p) {
  if (p.empty()) throw DimensionError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<SignalVote> majority_vote(const std::vector<Probabilities>& patch_probs,
                                      const std::vector<std::size_t>& source_ids) {
  if (patch_probs.size() != source_ids.size()) {
    throw DimensionError("majority_vote: one source id per patch is required");
  }
  std::map<std::size_t, SignalVote> by_source;
  std::map<std::size_t, Probabilities> sums;
  for (std::size_t p = 0; p < patch_probs.size(); ++p) {
    const auto& probs = patch_probs[p];
    auto& v = by_source[source_ids[p]];
    auto& s = sums[source_ids[p]];
    if (v.votes.empty()) {
      v.source_id = source_ids[p];
      v.votes.assign(probs.size(), 0);
      s.assign(probs.size(), 0.0);
    } else if (v.votes.size() != probs.size()) {
      throw DimensionError("majority_vote: inconsistent class count");
    }
    ++v.votes[argmax(probs)];
    ++v.patches;
    for (std::size_t g = 0; g < probs.size(); ++g) s[g] += probs[g];
  }
  std::vector<SignalVote> out;
  for (auto& [id, v] : by_source) {
    const auto& s = sums[id];
    std::size_t best = 0;
    for (std::size_t g = 1; g < v.votes.size(); ++g) {
      if (v.votes[g] > v.votes[best] || (v.votes[g] == v.votes[best] && s[g] > s[best])) best = g;
    }
    v.label = best;
    v.mean_probs.resize(s.size());
    for (std::size_t g = 0; g < s.size(); ++g) v.mean_probs[g] = s[g] / static_cast<double>(v.patches);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<SignalVote> majority_vote(const std::vector<Probabilities>& patch_probs,
                                      const std::vector<std::size_t>& source_ids,
                                      std::size_t n_signals) {
  auto out = majority_vote(patch_probs, source_ids);
  std::vector<bool> seen(n_signals, false);
  for (const auto& v : out) {
    if (v.source_id >= n_signals) {
      throw DataError("patch refers to unknown signal " + std::to_string(v.source_id));
    }
    seen[v.source_id] = true;
  }
  for (std::size_t s = 0; s < n_signals; ++s) {
    if (!seen[s]) throw DataError("signal " + std::to_string(s) + " has no patches");
  }
  return out;
}

Confusion confusion_and_accuracy(const std::vector<std::size_t>& preds,
                                 const std::vector<std::size_t>& labels, std::size_t classes) {
  if (preds.size() != labels.size()) {
    throw DimensionError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  }
  Confusion c;
  c.counts.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] >= classes || preds[i] >= classes) {
      throw DataError("class index " + std::to_string(std::max(labels[i], preds[i])) +
                      " out of range for " + std::to_string(classes) + " classes");
    }
    ++c.counts[labels[i]][preds[i]];
    if (labels[i] == preds[i]) ++correct;
  }
  c.total_accuracy = preds.empty() ? 0.0 : static_cast<double>(correct) / preds.size();
  c.recall.assign(classes, std::nullopt);
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t g = 0; g < classes; ++g) {
    const std::size_t row = std::accumulate(c.counts[g].begin(), c.counts[g].end(), std::size_t{0});
    if (row == 0) continue;
    c.recall[g] = static_cast<double>(c.counts[g][g]) / static_cast<double>(row);
    recall_sum += *c.recall[g];
    ++present;
  }
  c.balanced_accuracy = present == 0 ? 0.0 : recall_sum / static_cast<double>(present);
  return c;
}

std::optional<double> roc_auc(const std::vector<double>& scores,
                              const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw DimensionError("roc_auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks (1-based) over tied groups.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]]) {
        rank_sum += avg;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

namespace {

std::vector<double> class_scores(const std::vector<Probabilities>& scores, std::size_t g) {
  std::vector<double> s(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) s[i] = scores[i].at(g);
  return s;
}

std::vector<bool> is_class(const std::vector<std::size_t>& labels, std::size_t g) {
  std::vector<bool> p(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) p[i] = labels[i] == g;
  return p;
}

}  // namespace

std::optional<double> roc_auc(const std::vector<Probabilities>& scores,
                              const std::vector<std::size_t>& labels, std::size_t g) {
  return roc_auc(class_scores(scores, g), is_class(labels, g));
}

std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                 const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw DimensionError("roc_points: size mismatch");
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  const double n_neg = static_cast<double>(n) - n_pos;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] ? tp : fp) += 1.0;
      ++j;
    }
    pts.push_back({scores[order[i]], n_neg > 0 ? fp / n_neg : 0.0, n_pos > 0 ? tp / n_pos : 0.0});
    i = j;
  }
  return pts;
}

EvalReport evaluate(const std::vector<Probabilities>& patch_probs,
                    const std::vector<std::size_t>& patch_source,
                    const std::vector<std::size_t>& signal_labels, std::size_t classes) {
  EvalReport r;
  r.classes = classes;
  r.patches = patch_probs.size();
  r.signals = signal_labels.size();

  std::vector<std::size_t> patch_pred(patch_probs.size()), patch_label(patch_probs.size());
  for (std::size_t p = 0; p < patch_probs.size(); ++p) {
    if (patch_source[p] >= signal_labels.size()) throw DataError("patch source out of range");
    patch_pred[p] = argmax(patch_probs[p]);
    patch_label[p] = signal_labels[patch_source[p]];
  }
  const Confusion pc = confusion_and_accuracy(patch_pred, patch_label, classes);
  r.patch_accuracy = pc.total_accuracy;
  r.patch_balanced_accuracy = pc.balanced_accuracy;

  const auto votes = majority_vote(patch_probs, patch_source, signal_labels.size());
  std::vector<std::size_t> preds;
  std::vector<Probabilities> scores;
  for (const auto& v : votes) {
    preds.push_back(v.label);
    scores.push_back(v.mean_probs);
  }
  r.confusion = confusion_and_accuracy(preds, signal_labels, classes);
  for (std::size_t g = 0; g < classes; ++g) {
    const auto s = class_scores(scores, g);
    const auto pos = is_class(signal_labels, g);
    r.auc.push_back(roc_auc(s, pos));
    r.roc.push_back(roc_points(s, pos));
  }
  return r;
}

std::string report_json(const EvalReport& report, const std::string& extra_json) {
  nlohmann::json j = nlohmann::json::parse(extra_json);
  if (!j.is_object()) throw FormatError("report extras must be a JSON object");
  j["classes"] = report.classes;
  j["signals"] = report.signals;
  j["patches"] = report.patches;
  j["total_accuracy"] = report.confusion.total_accuracy;
  j["balanced_accuracy"] = report.confusion.balanced_accuracy;
  j["patch_accuracy"] = report.patch_accuracy;
  j["patch_balanced_accuracy"] = report.patch_balanced_accuracy;
  j["confusion"] = report.confusion.counts;
  nlohmann::json auc = nlohmann::json::array();
  for (const auto& a : report.auc) auc.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
  j["auc"] = auc;
  j["param_count"] = report.param_count;
  j["flop_count"] = report.flop_count;
  return j.dump(2);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path.string());
  f.precision(17);
  return f;
}

}  // namespace

void write_confusion_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "true\\pred";
  for (std::size_t g = 0; g < report.classes; ++g) f << ',' << g;
  f << '\n';
  for (std::size_t t = 0; t < report.classes; ++t) {
    f << t;
    for (std::size_t c : report.confusion.counts[t]) f << ',' << c;
    f << '\n';
  }
}

void write_roc_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto f = open_out(path);
  f << "class,threshold,fpr,tpr\n";
  for (std::size_t g = 0; g < report.roc.size(); ++g)
    for (const auto& p : report.roc[g]) {
      f << g << ',' << (std::isinf(p.threshold) ? std::string("inf") : std::to_string(p.threshold))
        << ',' << p.fpr << ',' << p.tpr << '\n';
    }
}

}  // namespace moemba::head
