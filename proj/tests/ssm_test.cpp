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

#include <algorithm>
#include <chrono>
#include <cmath>

#include "moemba/errors.hpp"
#include "moemba/ops.hpp"
#include "moemba/ssm.hpp"
#include "test_util.hpp"

namespace moemba::ssm {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

SsmCore random_core(std::size_t d, std::size_t n, std::uint64_t seed) {
  SsmCore c;
  c.a_log = random_tensor({d, n}, seed, -1.0, 1.5);
  c.w_b = random_tensor({n, d}, seed + 1);
  c.w_c = random_tensor({n, d}, seed + 2);
  c.w_delta = random_tensor({d}, seed + 3);
  c.d_skip = random_tensor({d}, seed + 4);
  return c;
}

// Step-by-step evaluation straight from the definitions.
std::vector<double> naive_scan(const Tensor& x, const SsmCore& core) {
  const std::size_t T = x.dim(0), D = x.dim(1), N = core.states();
  std::vector<double> h(D * N, 0.0), y(T * D);
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0;
    for (std::size_t k = 0; k < D; ++k) s += core.w_delta.at({k}) * x.at({t, k});
    const double delta = std::log1p(std::exp(s));
    for (std::size_t d = 0; d < D; ++d) {
      double out = core.d_skip.at({d}) * x.at({t, d});
      for (std::size_t n = 0; n < N; ++n) {
        double bv = 0, cv = 0;
        for (std::size_t k = 0; k < D; ++k) {
          bv += core.w_b.at({n, k}) * x.at({t, k});
          cv += core.w_c.at({n, k}) * x.at({t, k});
        }
        const double a = -std::exp(core.a_log.at({d, n}));
        const double abar = std::exp(delta * a);
        const double bbar = (abar - 1.0) / a * bv;
        h[d * N + n] = abar * h[d * N + n] + bbar * x.at({t, d});
        out += cv * h[d * N + n];
      }
      y[t * D + d] = out;
    }
  }
  return y;
}

TEST(Zoh, ClosedFormScalar) {
  const std::vector<double> a{-1.0}, b{1.0};
  const auto r = zoh_discretize(a, b, std::log(2.0));
  EXPECT_NEAR(r.a_bar[0], 0.5, 1e-15);
  EXPECT_NEAR(r.b_bar[0], 0.5, 1e-15);
}

TEST(Zoh, SmallStepLimit) {
  const std::vector<double> a{-3.0, -0.5}, b{2.0, -1.0};
  const auto r = zoh_discretize(a, b, 1e-12);
  for (std::size_t n = 0; n < 2; ++n) {
    EXPECT_NEAR(r.a_bar[n], 1.0, 1e-11);
    EXPECT_NEAR(r.b_bar[n], 0.0, 1e-11);
  }
}

TEST(Zoh, SeriesBranchAgreesAcrossThreshold) {
  // Reference in extended precision.
  for (double x : {1e-8, 1e-7, 9.9e-7, 1.01e-6, 1e-5, 1e-4}) {
    const double delta = 0.5, a = -x / delta;
    const std::vector<double> av{a}, bv{1.0};
    const double got = zoh_discretize(av, bv, delta).b_bar[0];
    const long double ref = std::expm1(static_cast<long double>(x) * -1.0L) /
                            static_cast<long double>(a);
    EXPECT_LT(std::abs((got - static_cast<double>(ref)) / static_cast<double>(ref)), 1e-6)
        << "x = " << x;
  }
}

TEST(Zoh, RejectsNonPositiveStep) {
  const std::vector<double> a{-1.0}, b{1.0};
  EXPECT_THROW(zoh_discretize(a, b, 0.0), DomainError);
}

TEST(Zoh, TransitionStaysInUnitInterval) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a_log = testing::random_values(32, seed, -5, 5);
    std::vector<double> a(32), b(32, 1.0);
    for (std::size_t i = 0; i < 32; ++i) a[i] = -std::exp(a_log[i]);
    for (double s : {-10.0, -1.0, 0.0, 2.0, 10.0}) {
      const double delta = std::log1p(std::exp(s));
      for (double v : zoh_discretize(a, b, delta).a_bar) {
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(SelectiveParams, ZeroInput) {
  const auto core = random_core(3, 2, 5);
  const std::vector<double> x(3, 0.0);
  const auto p = selective_params(x, core);
  for (double v : p.s_b) EXPECT_EQ(v, 0.0);
  for (double v : p.s_c) EXPECT_EQ(v, 0.0);
  for (double v : p.s_delta) EXPECT_NEAR(v, std::log(2.0), 1e-15);
}

TEST(SelectiveParams, ZeroDeltaRowIsConstant) {
  auto core = random_core(3, 2, 6);
  core.w_delta = Tensor::zeros({3});
  const auto x = testing::random_values(3, 7, -4, 4);
  for (double v : selective_params(x, core).s_delta) EXPECT_NEAR(v, std::log(2.0), 1e-15);
}

TEST(SelectiveParams, MatchesMatrixProducts) {
  const std::size_t d = 5, n = 3;
  const auto core = random_core(d, n, 8);
  const auto x = testing::random_values(d, 9);
  const auto p = selective_params(x, core);
  double s = 0;
  for (std::size_t k = 0; k < d; ++k) s += core.w_delta.at({k}) * x[k];
  for (std::size_t m = 0; m < n; ++m) {
    double bv = 0, cv = 0;
    for (std::size_t k = 0; k < d; ++k) {
      bv += core.w_b.at({m, k}) * x[k];
      cv += core.w_c.at({m, k}) * x[k];
    }
    EXPECT_NEAR(p.s_b[m], bv, 1e-12);
    EXPECT_NEAR(p.s_c[m], cv, 1e-12);
  }
  ASSERT_EQ(p.s_delta.size(), d);
  for (double v : p.s_delta) EXPECT_NEAR(v, std::log1p(std::exp(s)), 1e-12);
}

TEST(DiscreteScan, Integrator) {
  const std::vector<double> ones(3, 1.0), zero{0.0};
  const auto y = discrete_scan(ones, ones, ones, ones, zero, 3, 1, 1);
  EXPECT_EQ(y, (std::vector<double>{1, 2, 3}));
}

TEST(DiscreteScan, ZeroTransitionIsMemoryless) {
  const std::size_t T = 6, D = 2, N = 3;
  const std::vector<double> a_bar(T * D * N, 0.0);
  const auto b_bar = testing::random_values(T * D * N, 1);
  const auto c = testing::random_values(T * N, 2);
  const auto d_skip = testing::random_values(D, 3);
  auto x = testing::random_values(T * D, 4);
  const auto y = discrete_scan(a_bar, b_bar, c, x, d_skip, T, D, N);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      double expect = d_skip[d] * x[t * D + d];
      for (std::size_t n = 0; n < N; ++n)
        expect += c[t * N + n] * b_bar[(t * D + d) * N + n] * x[t * D + d];
      EXPECT_NEAR(y[t * D + d], expect, 1e-15);
    }
}

TEST(SelectiveScan, MatchesNaiveRecurrence) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto core = random_core(4, 4, seed * 10);
    const auto x = random_tensor({32, 4}, seed * 10 + 7);
    const auto y = selective_scan(x, core);
    EXPECT_LT(max_abs_diff(y.data(), naive_scan(x, core)), 1e-10) << "seed " << seed;
  }
}

TEST(SelectiveScan, BatchedMatchesSingle) {
  const auto core = random_core(3, 2, 11);
  const auto xb = random_tensor({3, 7, 3}, 12);
  const auto yb = selective_scan(xb, core);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto xs = ops::reshape(ops::slice(xb, 0, b, b + 1), {7, 3});
    EXPECT_EQ(max_abs_diff(ops::slice(yb, 0, b, b + 1).data(), selective_scan(xs, core).data()),
              0.0);
  }
}

TEST(SelectiveScan, BoundedOverLongSequences) {
  Rng rng(13);
  const auto core = init_core(4, 4, rng);
  const auto x = random_tensor({10000, 4}, 14);
  const auto y = selective_scan(x, core);
  double peak = 0;
  for (double v : y.data()) {
    ASSERT_TRUE(std::isfinite(v));
    peak = std::max(peak, std::abs(v));
  }
  EXPECT_LT(peak, 100.0);
}

TEST(SelectiveScan, GradientMatchesFiniteDifferences) {
  auto core = random_core(3, 4, 15);
  // Tiny |delta a| on two entries exercises the series branches.
  core.a_log.mutable_data()[0] = -20.0;
  core.a_log.mutable_data()[5] = -16.0;
  auto x = random_tensor({2, 6, 3}, 16);
  std::vector<Tensor> all = core.tensors();
  all.push_back(x);
  const auto errors = testing::gradient_errors(
      all, [&] { return testing::random_projection(selective_scan(x, core)); });
  for (std::size_t i = 0; i < errors.size(); ++i) EXPECT_LT(errors[i], 1e-6) << "tensor " << i;
}

MambaConfig tiny() {
  MambaConfig c;
  c.d_model = 4;
  c.expand = 2;
  c.d_state = 3;
  return c;
}

TEST(Mamba, ZeroProjectionsGiveIdentity) {
  Rng rng(17);
  auto p = init_mamba(tiny(), rng);
  p.w_in = Tensor::zeros(p.w_in.shape());
  p.w_out = Tensor::zeros(p.w_out.shape());
  const auto x = random_tensor({9, 4}, 18);
  EXPECT_EQ(max_abs_diff(mamba_block(x, p).data(), x.data()), 0.0);
}

TEST(Mamba, ShapePreserved) {
  for (auto [t, d] : {std::pair<std::size_t, std::size_t>{1, 2}, {5, 3}, {64, 8}}) {
    MambaConfig c;
    c.d_model = d;
    c.expand = 2;
    c.d_state = 4;
    Rng rng(t);
    const auto p = init_mamba(c, rng);
    EXPECT_EQ(mamba_block(random_tensor({t, d}, 1), p).shape(), (Shape{t, d}));
    EXPECT_EQ(mamba_block(random_tensor({2, t, d}, 1), p).shape(), (Shape{2, t, d}));
  }
}

TEST(Mamba, DefaultWidths) {
  MambaConfig c;
  EXPECT_EQ(c.d_state, 16u);
  EXPECT_EQ(c.conv_width, 4u);
  EXPECT_EQ(c.d_inner(), 4 * c.d_model);
}

TEST(Mamba, Causal) {
  Rng rng(19);
  const auto p = init_mamba(tiny(), rng);
  const auto x = random_tensor({12, 4}, 20);
  const auto y = mamba_block(x, p);
  for (std::size_t t : {0u, 5u, 11u}) {
    auto xp = x.detach();
    xp.mutable_data()[t * 4 + 1] += 0.7;
    const auto yp = mamba_block(xp, p);
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(yp.at({s, d}), y.at({s, d}));
    EXPECT_NE(yp.at({t, 1}), y.at({t, 1}));
  }
}

TEST(Mamba, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  const auto p = init_mamba(tiny(), rng);
  auto x = random_tensor({8, 4}, 22);
  std::vector<Tensor> all = p.tensors();
  all.push_back(x);
  const auto errors = testing::gradient_errors(
      all, [&] { return testing::random_projection(mamba_block(x, p)); });
  for (std::size_t i = 0; i < errors.size(); ++i) EXPECT_LT(errors[i], 1e-4) << "tensor " << i;
}

double seconds(const MambaParams& p, const Tensor& x) {
  const auto start = std::chrono::steady_clock::now();
  const auto y = mamba_block(x, p);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

TEST(Mamba, RuntimeLinearInLength) {
  MambaConfig c;
  c.d_model = 8;
  c.expand = 2;
  c.d_state = 8;
  Rng rng(23);
  const auto p = init_mamba(c, rng);
  const auto x1 = random_tensor({2048, 8}, 24);
  const auto x2 = random_tensor({4096, 8}, 25);
  seconds(p, x1);  // warm-up
  seconds(p, x2);
  // Interleaved so background load hits both lengths alike.
  std::vector<double> t1, t2;
  for (int r = 0; r < 20; ++r) {
    t1.push_back(seconds(p, x1));
    t2.push_back(seconds(p, x2));
  }
  const double ratio = median(t2) / median(t1);
  EXPECT_GE(ratio, 1.4);
  EXPECT_LE(ratio, 2.6);
}

}  // namespace
}  // namespace moemba::ssm
