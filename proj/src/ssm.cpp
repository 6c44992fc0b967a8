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

#include "moemba/ssm.hpp"

#include <cmath>

#include "moemba/errors.hpp"
#include "moemba/init.hpp"
#include "moemba/ops.hpp"
#include "moemba/scalar_math.hpp"

namespace moemba::ssm {

using detail::grad_of;
using detail::make_result;
using detail::Node;

namespace {

constexpr double kSeriesThreshold = 1e-6;

// exp(delta a) floored above zero so the transition never underflows.
double transition(double delta, double a) { return std::exp(std::max(delta * a, -700.0)); }

// (exp(delta a) - 1) / a.
double zoh_gain(double delta, double a) {
  const double x = delta * a;
  if (std::abs(x) < kSeriesThreshold) return delta * (1.0 + x / 2.0 + x * x / 6.0);
  return std::expm1(x) / a;
}

// psi(x) = (x e^x - e^x + 1) / x^2, so d/da of zoh_gain is delta^2 psi.
double psi(double x) {
  if (std::abs(x) < 0.5) {
    // sum_k (k + 1) x^k / (k + 2)!
    double term = 0.5, acc = 0.0;
    for (int k = 0; k < 30; ++k) {
      acc += term;
      term *= x * (k + 2.0) / ((k + 1.0) * (k + 3.0));
    }
    return acc;
  }
  return (x * std::exp(x) - std::expm1(x)) / (x * x);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

SsmCore init_core(std::size_t channels, std::size_t states, Rng& rng) {
  SsmCore c;
  std::vector<double> a_log(channels * states);
  for (std::size_t d = 0; d < channels; ++d)
    for (std::size_t n = 0; n < states; ++n) a_log[d * states + n] = std::log(n + 1.0);
  c.a_log = Tensor::parameter({channels, states}, std::move(a_log));
  c.w_b = fan_in_parameter({states, channels}, channels, rng);
  c.w_c = fan_in_parameter({states, channels}, channels, rng);
  c.w_delta = fan_in_parameter({channels}, channels, rng);
  c.d_skip = Tensor::parameter({channels}, std::vector<double>(channels, 1.0));
  return c;
}

Discretized zoh_discretize(std::span<const double> a, std::span<const double> b, double delta) {
  require(a.size() == b.size(), "zoh_discretize: a and b differ in length");
  if (!(delta > 0.0)) throw DomainError("zoh_discretize needs delta > 0");
  Discretized r;
  r.a_bar.resize(a.size());
  r.b_bar.resize(a.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    r.a_bar[n] = transition(delta, a[n]);
    r.b_bar[n] = zoh_gain(delta, a[n]) * b[n];
  }
  return r;
}

SelectiveParams selective_params(std::span<const double> x_t, const SsmCore& core) {
  const std::size_t d = core.channels(), n = core.states();
  require(x_t.size() == d, "selective_params: input width mismatch");
  SelectiveParams p;
  p.s_b.assign(n, 0.0);
  p.s_c.assign(n, 0.0);
  const auto wb = core.w_b.data(), wc = core.w_c.data(), wd = core.w_delta.data();
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += wd[k] * x_t[k];
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t k = 0; k < d; ++k) {
      p.s_b[m] += wb[m * d + k] * x_t[k];
      p.s_c[m] += wc[m * d + k] * x_t[k];
    }
  p.s_delta.assign(d, stable_softplus(s));
  return p;
}

std::vector<double> discrete_scan(std::span<const double> a_bar, std::span<const double> b_bar,
                                  std::span<const double> c, std::span<const double> x,
                                  std::span<const double> d_skip, std::size_t steps,
                                  std::size_t channels, std::size_t states) {
  const std::size_t dn = channels * states;
  require(a_bar.size() == steps * dn && b_bar.size() == steps * dn &&
              c.size() == steps * states && x.size() == steps * channels &&
              d_skip.size() == channels,
          "discrete_scan: inconsistent sizes");
  std::vector<double> h(dn, 0.0), y(steps * channels);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t d = 0; d < channels; ++d) {
      double acc = d_skip[d] * x[t * channels + d];
      for (std::size_t n = 0; n < states; ++n) {
        const std::size_t i = d * states + n;
        h[i] = a_bar[t * dn + i] * h[i] + b_bar[t * dn + i] * x[t * channels + d];
        acc += c[t * states + n] * h[i];
      }
      y[t * channels + d] = acc;
    }
  return y;
}

Tensor selective_scan(const Tensor& x, const SsmCore& core) {
  const bool batched = x.rank() == 3;
  require(batched || x.rank() == 2, "selective_scan expects [T, D] or [B, T, D]");
  const std::size_t nb = batched ? x.dim(0) : 1;
  const std::size_t T = x.dim(batched ? 1 : 0), D = x.dim(batched ? 2 : 1);
  const std::size_t N = core.states();
  require(core.channels() == D && core.w_b.shape() == Shape{N, D} &&
              core.w_c.shape() == Shape{N, D} && core.w_delta.shape() == Shape{D} &&
              core.d_skip.shape() == Shape{D},
          "selective_scan: core does not match input width " + std::to_string(D));

  std::vector<double> a(D * N);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(core.a_log.data()[i]);

  // Per-step projections: s (pre-softplus), delta, Bv, Cv.
  struct Step {
    std::vector<double> s, delta, bv, cv;
  };
  const auto xd = x.data();
  const auto wb = core.w_b.data(), wc = core.w_c.data(), wd = core.w_delta.data();
  const auto ds = core.d_skip.data();
  Step st{std::vector<double>(nb * T), std::vector<double>(nb * T),
          std::vector<double>(nb * T * N, 0.0), std::vector<double>(nb * T * N, 0.0)};
  for (std::size_t bt = 0; bt < nb * T; ++bt) {
    const double* xt = &xd[bt * D];
    double s = 0.0;
    for (std::size_t k = 0; k < D; ++k) s += wd[k] * xt[k];
    st.s[bt] = s;
    st.delta[bt] = stable_softplus(s);
    for (std::size_t m = 0; m < N; ++m) {
      double bsum = 0.0, csum = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        bsum += wb[m * D + k] * xt[k];
        csum += wc[m * D + k] * xt[k];
      }
      st.bv[bt * N + m] = bsum;
      st.cv[bt * N + m] = csum;
    }
  }

  // Forward recurrence. Every h_t is kept only when a backward pass can
  // follow; otherwise two alternating rows suffice.
  bool keep = false;
  if (Tape::active() != nullptr) {
    for (const Tensor& t : {x, core.a_log, core.w_b, core.w_c, core.w_delta, core.d_skip}) {
      keep = keep || t.requires_grad();
    }
  }
  std::vector<double> hist((keep ? nb * T : 2) * D * N);
  const auto row = [&](std::size_t bt) { return &hist[(keep ? bt : bt % 2) * D * N]; };
  std::vector<double> y(nb * T * D);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t bt = b * T + t;
      const double delta = st.delta[bt];
      const double* bv = &st.bv[bt * N];
      const double* cv = &st.cv[bt * N];
      double* h = row(bt);
      const double* hp = t == 0 ? nullptr : row(bt - 1);
      for (std::size_t d = 0; d < D; ++d) {
        const double u = xd[bt * D + d];
        double acc = ds[d] * u;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t i = d * N + n;
          const double prev = hp ? hp[i] : 0.0;
          h[i] = transition(delta, a[i]) * prev + zoh_gain(delta, a[i]) * bv[n] * u;
          acc += cv[n] * h[i];
        }
        y[bt * D + d] = acc;
      }
    }
  }

  Shape out_shape = x.shape();
  auto backward = [x, core, a = std::move(a), st = std::move(st), hist = std::move(hist), nb, T,
                   D, N](const Node& o) {
    const auto xd = x.data();
    const auto wb = core.w_b.data(), wc = core.w_c.data(), wd = core.w_delta.data();
    const auto ds = core.d_skip.data();
    auto gx = grad_of(x);
    auto ga_log = grad_of(core.a_log);
    auto gwb = grad_of(core.w_b);
    auto gwc = grad_of(core.w_c);
    auto gwd = grad_of(core.w_delta);
    auto gds = grad_of(core.d_skip);
    const double* gy = o.grad.data();

    std::vector<double> ga(D * N, 0.0);
    std::vector<double> gh(D * N);
    std::vector<double> gu(T * D);
    std::vector<double> gbv(N), gcv(N);
    for (std::size_t b = 0; b < nb; ++b) {
      std::fill(gh.begin(), gh.end(), 0.0);
      std::fill(gu.begin(), gu.end(), 0.0);
      for (std::size_t t = T; t-- > 0;) {
        const std::size_t bt = b * T + t;
        const double delta = st.delta[bt];
        const double* bv = &st.bv[bt * N];
        const double* cv = &st.cv[bt * N];
        const double* h = &hist[bt * D * N];
        const double* hp = t == 0 ? nullptr : &hist[(bt - 1) * D * N];
        std::fill(gbv.begin(), gbv.end(), 0.0);
        std::fill(gcv.begin(), gcv.end(), 0.0);
        double gdelta = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
          const double u = xd[bt * D + d];
          const double g = gy[bt * D + d];
          if (!gds.empty()) gds[d] += g * u;
          double gud = g * ds[d];
          for (std::size_t n = 0; n < N; ++n) {
            const std::size_t i = d * N + n;
            gcv[n] += g * h[i];
            const double adj = gh[i] + g * cv[n];  // dL/dh_t
            const double prev = hp ? hp[i] : 0.0;
            const double abar = transition(delta, a[i]);
            const double gain = zoh_gain(delta, a[i]);
            const double g_abar = adj * prev;
            const double g_gain = adj * bv[n] * u;
            gud += adj * gain * bv[n];
            gbv[n] += adj * gain * u;
            gdelta += g_abar * a[i] * abar + g_gain * abar;
            ga[i] += g_abar * delta * abar + g_gain * delta * delta * psi(delta * a[i]);
            gh[i] = adj * abar;
          }
          gu[t * D + d] += gud;
        }
        // Projections of x_t into Bv, Cv and the step size.
        const double gs = gdelta * stable_sigmoid(st.s[bt]);
        for (std::size_t k = 0; k < D; ++k) {
          const double xk = xd[bt * D + k];
          double acc = gs * wd[k];
          if (!gwd.empty()) gwd[k] += gs * xk;
          for (std::size_t m = 0; m < N; ++m) {
            acc += gbv[m] * wb[m * D + k] + gcv[m] * wc[m * D + k];
            if (!gwb.empty()) gwb[m * D + k] += gbv[m] * xk;
            if (!gwc.empty()) gwc[m * D + k] += gcv[m] * xk;
          }
          gu[t * D + k] += acc;
        }
      }
      if (!gx.empty()) {
        for (std::size_t i = 0; i < T * D; ++i) gx[b * T * D + i] += gu[i];
      }
    }
    if (!ga_log.empty()) {
      for (std::size_t i = 0; i < D * N; ++i) ga_log[i] += ga[i] * a[i];
    }
  };
  return make_result(std::move(out_shape), std::move(y),
                     {x, core.a_log, core.w_b, core.w_c, core.w_delta, core.d_skip},
                     std::move(backward), "selective_scan");
}

void MambaConfig::validate() const {
  if (d_model == 0 || expand == 0 || d_state == 0 || conv_width == 0) {
    throw ConfigError("mamba dimensions must be positive");
  }
}

std::vector<Tensor> MambaParams::tensors() const {
  std::vector<Tensor> out{w_in, conv_kernel, conv_bias};
  for (const auto& t : core.tensors()) out.push_back(t);
  out.push_back(w_out);
  return out;
}

MambaParams init_mamba(const MambaConfig& config, Rng& rng) {
  config.validate();
  const std::size_t dm = config.d_model, di = config.d_inner();
  MambaParams p;
  p.w_in = fan_in_parameter({dm, 2 * di}, dm, rng);
  p.conv_kernel = fan_in_parameter({di, config.conv_width}, config.conv_width, rng);
  p.conv_bias = fan_in_parameter({di}, config.conv_width, rng);
  p.core = init_core(di, config.d_state, rng);
  p.w_out = fan_in_parameter({di, dm}, di, rng);
  return p;
}

Tensor mamba_block(const Tensor& x, const MambaParams& params) {
  const bool batched = x.rank() == 3;
  require(batched || x.rank() == 2, "mamba_block expects [T, D] or [B, T, D]");
  const std::size_t nb = batched ? x.dim(0) : 1;
  const std::size_t T = x.dim(batched ? 1 : 0), dm = x.dim(batched ? 2 : 1);
  require(params.w_in.rank() == 2 && params.w_in.dim(0) == dm,
          "mamba_block: in_proj expects width " + std::to_string(params.w_in.dim(0)) +
              ", got " + std::to_string(dm));
  const std::size_t di = params.w_in.dim(1) / 2;

  const Tensor flat = ops::reshape(x, {nb * T, dm});
  const Tensor proj = ops::matmul(flat, params.w_in);
  const Tensor u_raw = ops::reshape(ops::slice(proj, 1, 0, di), {nb, T, di});
  const Tensor gate = ops::reshape(ops::slice(proj, 1, di, 2 * di), {nb, T, di});
  const Tensor conv = ops::conv1d_depthwise(u_raw, params.conv_kernel, ops::Padding::kCausal);
  const Tensor bias = ops::reshape(ops::repeat_leading(params.conv_bias, nb * T), {nb, T, di});
  const Tensor u = ops::silu(ops::add(conv, bias));
  const Tensor y = ops::mul(selective_scan(u, params.core), ops::silu(gate));
  const Tensor out = ops::matmul(ops::reshape(y, {nb * T, di}), params.w_out);
  return ops::add(ops::reshape(out, x.shape()), x);
}

}  // namespace moemba::ssm
