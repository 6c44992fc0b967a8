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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"
#include "moemba/errors.hpp"
#include "moemba/head.hpp"
#include "moemba/ops.hpp"
#include "test_util.hpp"

namespace moemba::head {
namespace {

using testing::random_tensor;

HeadParams zero_head(std::size_t d, std::size_t g) {
  Rng rng = make_rng(0, Stream::kInit);
  HeadParams p = init_head(d, g, rng);
  for (double& v : p.w.mutable_data()) v = 0.0;
  return p;
}

TEST(Head, RejectsSingleClass) {
  Rng rng = make_rng(0, Stream::kInit);
  EXPECT_THROW(init_head(8, 1, rng), ConfigError);
}

TEST(Head, ZeroProjectionIsUniform) {
  const HeadParams p = zero_head(6, 8);
  const Tensor probs = classify_patch(random_tensor({6}, 3), p);
  for (double v : probs.data()) EXPECT_NEAR(v, 0.125, 1e-15);
}

TEST(Head, ProbabilitiesSumToOne) {
  Rng rng = make_rng(5, Stream::kInit);
  const HeadParams p = init_head(10, 8, rng);
  const Tensor probs = classify_patch(random_tensor({7, 10}, 11, -3.0, 3.0), p);
  ASSERT_EQ(probs.shape(), (Shape{7, 8}));
  for (std::size_t b = 0; b < 7; ++b) {
    double s = 0.0;
    for (std::size_t g = 0; g < 8; ++g) {
      const double v = probs.data()[b * 8 + g];
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Head, MatchesFormula) {
  Rng rng = make_rng(1, Stream::kInit);
  HeadParams p = init_head(5, 3, rng);
  for (std::size_t i = 0; i < 5; ++i) {
    p.gamma.mutable_data()[i] = 0.5 + 0.1 * static_cast<double>(i);
    p.beta.mutable_data()[i] = -0.2 + 0.05 * static_cast<double>(i);
  }
  p.b.mutable_data()[1] = 0.3;
  const Tensor z = random_tensor({5}, 9);
  const auto x = z.data();
  double mu = 0, var = 0;
  for (double v : x) mu += v / 5.0;
  for (double v : x) var += (v - mu) * (v - mu) / 5.0;
  std::vector<double> h(5);
  for (std::size_t i = 0; i < 5; ++i) {
    const double n = (x[i] - mu) / std::sqrt(var + 1e-5);
    const double a = n * p.gamma.data()[i] + p.beta.data()[i];
    h[i] = a / (1.0 + std::exp(-a));
  }
  const Tensor logits = head_logits(z, p);
  for (std::size_t g = 0; g < 3; ++g) {
    double want = p.b.data()[g];
    for (std::size_t i = 0; i < 5; ++i) want += h[i] * p.w.data()[i * 3 + g];
    EXPECT_NEAR(logits.data()[g], want, 1e-9);
  }
}

TEST(Head, Gradient) {
  Rng rng = make_rng(2, Stream::kInit);
  HeadParams p = init_head(6, 4, rng);
  Tensor z = random_tensor({3, 6}, 21, -2.0, 2.0);
  auto params = p.tensors();
  params.push_back(z);
  const auto errs = testing::gradient_errors(
      params, [&] { return testing::random_projection(classify_patch(z, p)); });
  for (double e : errs) EXPECT_LT(e, 1e-6);
}

TEST(Head, RejectsWrongWidth) {
  Rng rng = make_rng(0, Stream::kInit);
  const HeadParams p = init_head(6, 4, rng);
  EXPECT_THROW(head_logits(random_tensor({5}, 1), p), DimensionError);
}

TEST(Vote, Majority) {
  const std::vector<Probabilities> probs{{0.1, 0.8, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.2, 0.7}};
  const auto v = majority_vote(probs, {0, 0, 0});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].label, 1u);
  EXPECT_EQ(v[0].patches, 3u);
  EXPECT_EQ(v[0].votes, (std::vector<std::size_t>{0, 2, 1}));
}

TEST(Vote, TieGoesToHigherProbabilityMass) {
  // One vote each for 0 and 2; class 2 carries more total probability.
  const std::vector<Probabilities> probs{{0.5, 0.1, 0.4}, {0.1, 0.3, 0.6}};
  EXPECT_EQ(majority_vote(probs, {4, 4})[0].label, 2u);
  // Exact tie in votes and mass: lower class.
  const std::vector<Probabilities> even{{0.6, 0.4}, {0.4, 0.6}};
  EXPECT_EQ(majority_vote(even, {0, 0})[0].label, 0u);
}

TEST(Vote, GroupsBySource) {
  const std::vector<Probabilities> probs{{0.9, 0.1}, {0.2, 0.8}, {0.7, 0.3}, {0.1, 0.9}};
  const auto v = majority_vote(probs, {1, 0, 1, 0}, 2);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].source_id, 0u);
  EXPECT_EQ(v[0].label, 1u);
  EXPECT_EQ(v[1].label, 0u);
  EXPECT_NEAR(v[1].mean_probs[0], 0.8, 1e-15);
}

TEST(Vote, SignalWithoutPatchesIsError) {
  const std::vector<Probabilities> probs{{0.9, 0.1}};
  EXPECT_THROW(majority_vote(probs, {0}, 2), DataError);
}

TEST(Confusion, ConstantPredictorIsChance) {
  std::vector<std::size_t> labels;
  for (std::size_t g = 0; g < 8; ++g)
    for (int r = 0; r < 5; ++r) labels.push_back(g);
  const std::vector<std::size_t> preds(labels.size(), 0);
  const Confusion c = confusion_and_accuracy(preds, labels, 8);
  EXPECT_DOUBLE_EQ(c.balanced_accuracy, 0.125);
  EXPECT_DOUBLE_EQ(c.total_accuracy, 0.125);
}

TEST(Confusion, HandCountedExample) {
  // 20 samples, 3 classes.
  const std::vector<std::size_t> labels{0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2};
  const std::vector<std::size_t> preds{0, 0, 0, 0, 0, 1, 1, 2, 1, 1, 1, 0, 2, 2, 2, 2, 2, 2, 2, 0};
  const Confusion c = confusion_and_accuracy(preds, labels, 3);
  const std::vector<std::vector<std::size_t>> want{{5, 2, 1}, {1, 3, 2}, {1, 0, 5}};
  EXPECT_EQ(c.counts, want);
  EXPECT_DOUBLE_EQ(c.total_accuracy, 13.0 / 20.0);
  EXPECT_NEAR(c.balanced_accuracy, (5.0 / 8.0 + 3.0 / 6.0 + 5.0 / 6.0) / 3.0, 1e-15);
}

TEST(Confusion, AbsentClassIsSkipped) {
  const Confusion c = confusion_and_accuracy({0, 1, 1}, {0, 0, 1}, 3);
  EXPECT_FALSE(c.recall[2].has_value());
  EXPECT_DOUBLE_EQ(c.balanced_accuracy, (0.5 + 1.0) / 2.0);
}

TEST(Confusion, OutOfRangeLabel) {
  EXPECT_THROW(confusion_and_accuracy({0}, {3}, 3), DataError);
}

TEST(Auc, PerfectAndTied) {
  EXPECT_DOUBLE_EQ(*roc_auc({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}), 1.0);
  EXPECT_DOUBLE_EQ(*roc_auc({0.1, 0.2, 0.8, 0.9}, {true, true, false, false}), 0.0);
  EXPECT_DOUBLE_EQ(*roc_auc({0.5, 0.5, 0.5, 0.5}, {true, false, true, false}), 0.5);
  EXPECT_FALSE(roc_auc({0.1, 0.2}, {true, true}).has_value());
}

TEST(Auc, MatchesPairCounting) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> level(0, 5);
  std::bernoulli_distribution coin(0.4);
  std::vector<double> s(60);
  std::vector<bool> pos(60);
  for (std::size_t i = 0; i < 60; ++i) {
    s[i] = level(rng);  // many ties
    pos[i] = coin(rng);
  }
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < 60; ++i)
    for (std::size_t j = 0; j < 60; ++j)
      if (pos[i] && !pos[j]) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  EXPECT_NEAR(*roc_auc(s, pos), wins / pairs, 1e-14);
}

TEST(Auc, RandomScoresNearHalf) {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> s(1000);
    std::vector<bool> pos(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
      s[i] = u(rng);
      pos[i] = coin(rng);
    }
    total += *roc_auc(s, pos);
  }
  EXPECT_NEAR(total / 10.0, 0.5, 0.05);
}

TEST(Auc, InvariantUnderMonotoneMaps) {
  const auto s = testing::random_values(200, 5);
  std::vector<bool> pos(200);
  std::vector<double> t(200);
  for (std::size_t i = 0; i < 200; ++i) {
    pos[i] = s[i] + 0.3 * std::sin(static_cast<double>(i)) > 0.0;
    t[i] = std::exp(3.0 * s[i]) + 2.0;
  }
  EXPECT_DOUBLE_EQ(*roc_auc(s, pos), *roc_auc(t, pos));
}

TEST(Roc, PointsAreMonotone) {
  const auto pts = roc_points({0.9, 0.8, 0.8, 0.3, 0.1}, {true, false, true, false, true});
  ASSERT_EQ(pts.size(), 5u);
  EXPECT_EQ(pts.front().fpr, 0.0);
  EXPECT_EQ(pts.back().fpr, 1.0);
  EXPECT_EQ(pts.back().tpr, 1.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_GE(pts[i].fpr, pts[i - 1].fpr);
    EXPECT_GE(pts[i].tpr, pts[i - 1].tpr);
    EXPECT_LT(pts[i].threshold, pts[i - 1].threshold);
  }
}

TEST(Evaluate, ScalingLogitsKeepsDecisions) {
  // Predictions and AUC depend only on the ordering of the logits.
  const std::size_t patches = 40, classes = 4, signals = 8;
  const Tensor logits = random_tensor({patches, classes}, 77, -2.0, 2.0);
  std::vector<std::size_t> source(patches), labels(signals);
  for (std::size_t p = 0; p < patches; ++p) source[p] = p % signals;
  for (std::size_t s = 0; s < signals; ++s) labels[s] = s % classes;
  auto probs_of = [&](double k) {
    const Tensor pr = ops::softmax(ops::scale(logits, k), 1);
    std::vector<Probabilities> out(patches);
    for (std::size_t p = 0; p < patches; ++p)
      out[p].assign(pr.data().begin() + p * classes, pr.data().begin() + (p + 1) * classes);
    return out;
  };
  const EvalReport a = evaluate(probs_of(1.0), source, labels, classes);
  const EvalReport b = evaluate(probs_of(7.3), source, labels, classes);
  EXPECT_EQ(a.patch_accuracy, b.patch_accuracy);
  // Voting ties are broken by probability mass, which scaling can move; the
  // vote counts themselves are unchanged.
  const auto va = majority_vote(probs_of(1.0), source);
  const auto vb = majority_vote(probs_of(7.3), source);
  for (std::size_t s = 0; s < signals; ++s) EXPECT_EQ(va[s].votes, vb[s].votes);
}

TEST(Evaluate, ReportAndFiles) {
  const std::vector<Probabilities> probs{{0.9, 0.1}, {0.8, 0.2}, {0.3, 0.7}, {0.6, 0.4}};
  const EvalReport r = evaluate(probs, {0, 0, 1, 1}, {0, 1}, 2);
  EXPECT_EQ(r.signals, 2u);
  EXPECT_EQ(r.patches, 4u);
  EXPECT_DOUBLE_EQ(r.patch_accuracy, 0.75);
  // Signal 1 ties 1-1; class 1 has mass 1.1 vs 0.9.
  EXPECT_DOUBLE_EQ(r.confusion.total_accuracy, 1.0);
  EXPECT_GE(r.confusion.total_accuracy, r.patch_accuracy);

  const auto j = nlohmann::json::parse(report_json(r, R"({"model": "x"})"));
  EXPECT_EQ(j["model"], "x");
  EXPECT_EQ(j["confusion"][1][1], 1);
  EXPECT_DOUBLE_EQ(j["balanced_accuracy"].get<double>(), 1.0);

  const auto dir = std::filesystem::temp_directory_path() / "moemba_head_test";
  std::filesystem::create_directories(dir);
  write_confusion_csv(r, dir / "confusion.csv");
  write_roc_csv(r, dir / "roc.csv");
  std::ifstream f(dir / "confusion.csv");
  std::string header, row0;
  std::getline(f, header);
  std::getline(f, row0);
  EXPECT_EQ(header, "true\\pred,0,1");
  EXPECT_EQ(row0, "0,1,0");
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace moemba::head
