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

#include "moemba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "moemba/errors.hpp"
#include "moemba/scalar_math.hpp"

namespace moemba::ops {

using detail::grad_of;
using detail::make_result;
using detail::Node;
using detail::wants_grad;

namespace {

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Elementwise unary op whose derivative can be written from (x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df, const char* name) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {x},
                     [x, df](const Node& o) {
                       auto gx = grad_of(x);
                       const auto xd = x.data();
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         gx[i] += o.grad[i] * df(xd[i], o.data[i]);
                       }
                     },
                     name);
}

}  // namespace

// --- shape plumbing ---------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " +
                         shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x},
                     [x](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
                     },
                     "reshape");
}

Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b) {
  const auto& s = x.shape();
  if (axis_a >= s.size() || axis_b >= s.size()) {
    throw DimensionError("transpose axes out of range for " + shape_str(s));
  }
  if (axis_a > axis_b) std::swap(axis_a, axis_b);
  Shape out_shape = s;
  std::swap(out_shape[axis_a], out_shape[axis_b]);
  if (axis_a == axis_b) return reshape(x, out_shape);

  // View as [p, A, q, B, r] -> [p, B, q, A, r].
  std::size_t p = 1, q = 1, r = 1;
  for (std::size_t i = 0; i < axis_a; ++i) p *= s[i];
  for (std::size_t i = axis_a + 1; i < axis_b; ++i) q *= s[i];
  for (std::size_t i = axis_b + 1; i < s.size(); ++i) r *= s[i];
  const std::size_t na = s[axis_a], nb = s[axis_b];

  auto src_index = [=](std::size_t ip, std::size_t ia, std::size_t iq,
                       std::size_t ib, std::size_t ir) {
    return (((ip * na + ia) * q + iq) * nb + ib) * r + ir;
  };
  std::vector<std::size_t> perm(x.numel());
  std::size_t k = 0;
  for (std::size_t ip = 0; ip < p; ++ip)
    for (std::size_t ib = 0; ib < nb; ++ib)
      for (std::size_t iq = 0; iq < q; ++iq)
        for (std::size_t ia = 0; ia < na; ++ia)
          for (std::size_t ir = 0; ir < r; ++ir) perm[k++] = src_index(ip, ia, iq, ib, ir);

  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[perm[i]];
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, perm = std::move(perm)](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t i = 0; i < perm.size(); ++i) gx[perm[i]] += o.grad[i];
                     },
                     "transpose");
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) throw DimensionError("concat axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) {
        throw DimensionError("concat: " + shape_str(s) + " vs " + shape_str(s0));
      }
    }
    out_shape[axis] += s[axis];
  }
  const auto split = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& t : parts) {
    offsets.push_back(offset);
    const std::size_t n = t.dim(axis);
    const auto d = t.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(d.begin() + o * n * split.inner, n * split.inner,
                  out.begin() + (o * split.n + offset) * split.inner);
    }
    offset += n;
  }
  return make_result(std::move(out_shape), std::move(out), parts,
                     [parts, offsets, axis, split](const Node& o) {
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                         auto g = grad_of(parts[k]);
                         if (g.empty()) continue;
                         const std::size_t n = parts[k].dim(axis);
                         for (std::size_t oo = 0; oo < split.outer; ++oo) {
                           const std::size_t src = (oo * split.n + offsets[k]) * split.inner;
                           const std::size_t dst = oo * n * split.inner;
                           for (std::size_t i = 0; i < n * split.inner; ++i) {
                             g[dst + i] += o.grad[src + i];
                           }
                         }
                       }
                     },
                     "concat");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end) {
  const auto split = split_at(x.shape(), axis);
  if (begin > end || end > split.n) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t len = (end - begin) * split.inner;
  std::vector<double> out(split.outer * len);
  const auto xd = x.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xd.begin() + (o * split.n + begin) * split.inner, len,
                out.begin() + o * len);
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, split, begin, len](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t oo = 0; oo < split.outer; ++oo) {
                         const std::size_t base = (oo * split.n + begin) * split.inner;
                         for (std::size_t i = 0; i < len; ++i) gx[base + i] += o.grad[oo * len + i];
                       }
                     },
                     "slice");
}

Tensor repeat_leading(const Tensor& x, std::size_t n) {
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  const auto xd = x.data();
  std::vector<double> out;
  out.reserve(n * xd.size());
  for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), xd.begin(), xd.end());
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, n](const Node& o) {
                       auto gx = grad_of(x);
                       const std::size_t m = gx.size();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < m; ++j) gx[j] += o.grad[i * m + j];
                     },
                     "repeat_leading");
}

Tensor repeat_trailing(const Tensor& x, const Shape& suffix) {
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.end(), suffix.begin(), suffix.end());
  const std::size_t rep = shape_numel(suffix);
  const auto xd = x.data();
  std::vector<double> out(xd.size() * rep);
  for (std::size_t i = 0; i < xd.size(); ++i) {
    std::fill_n(out.begin() + i * rep, rep, xd[i]);
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, rep](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         double acc = 0.0;
                         for (std::size_t j = 0; j < rep; ++j) acc += o.grad[i * rep + j];
                         gx[i] += acc;
                       }
                     },
                     "repeat_trailing");
}

Tensor index_select(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (x.rank() == 0) throw DimensionError("index_select on a scalar");
  const std::size_t n = x.dim(0);
  const std::size_t row = x.numel() / std::max<std::size_t>(n, 1);
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  std::vector<double> out(rows.size() * row);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("index_select row out of range");
    std::copy_n(xd.begin() + rows[r] * row, row, out.begin() + r * row);
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, rows, row](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t r = 0; r < rows.size(); ++r)
                         for (std::size_t i = 0; i < row; ++i) gx[rows[r] * row + i] += o.grad[r * row + i];
                     },
                     "index_select");
}

Tensor scatter_rows(const Tensor& x, const std::vector<std::size_t>& rows,
                    std::size_t n_rows) {
  if (x.rank() == 0 || x.dim(0) != rows.size()) {
    throw DimensionError("scatter_rows: row count mismatch");
  }
  const std::size_t row = rows.empty() ? 0 : x.numel() / rows.size();
  Shape out_shape = x.shape();
  out_shape[0] = n_rows;
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n_rows) throw DimensionError("scatter_rows row out of range");
    for (std::size_t i = 0; i < row; ++i) out[rows[r] * row + i] += xd[r * row + i];
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, rows, row](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t r = 0; r < rows.size(); ++r)
                         for (std::size_t i = 0; i < row; ++i) gx[r * row + i] += o.grad[rows[r] * row + i];
                     },
                     "scatter_rows");
}

Tensor column(const Tensor& x, std::size_t j) {
  if (x.rank() != 2 || j >= x.dim(1)) throw DimensionError("column out of range");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m);
  const auto xd = x.data();
  for (std::size_t i = 0; i < m; ++i) out[i] = xd[i * n + j];
  return make_result({m}, std::move(out), {x},
                     [x, j, m, n](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t i = 0; i < m; ++i) gx[i * n + j] += o.grad[i];
                     },
                     "column");
}

// --- linear algebra ---------------------------------------------------------

namespace {

// c[m x p] += a[m x k] * b[k x p]
void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> c, std::size_t m, std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * p;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a[i * k + l];
      if (av == 0.0) continue;
      const double* bl = b.data() + l * p;
      for (std::size_t j = 0; j < p; ++j) ci[j] += av * bl[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  std::vector<double> out(m * p, 0.0);
  gemm_nn(a.data(), b.data(), out, m, k, p);
  return make_result({m, p}, std::move(out), {a, b},
                     [a, b, m, k, p](const Node& o) {
                       const auto g = std::span<const double>(o.grad);
                       if (auto ga = grad_of(a); !ga.empty()) {
                         // dA = dC * B^T
                         const auto bd = b.data();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t l = 0; l < k; ++l) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < p; ++j) acc += g[i * p + j] * bd[l * p + j];
                             ga[i * k + l] += acc;
                           }
                       }
                       if (auto gb = grad_of(b); !gb.empty()) {
                         // dB = A^T * dC
                         const auto ad = a.data();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t l = 0; l < k; ++l) {
                             const double av = ad[i * k + l];
                             if (av == 0.0) continue;
                             for (std::size_t j = 0; j < p; ++j) gb[l * p + j] += av * g[i * p + j];
                           }
                       }
                     },
                     "matmul");
}

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b](const Node& o) {
                       for (const Tensor* t : {&a, &b}) {
                         auto g = grad_of(*t);
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                       }
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b](const Node& o) {
                       auto ga = grad_of(a);
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
                       auto gb = grad_of(b);
                       for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i];
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto ad = a.data(), bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b](const Node& o) {
                       auto ga = grad_of(a);
                       const auto bd = b.data();
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * bd[i];
                       auto gb = grad_of(b);
                       const auto ad = a.data();
                       for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * ad[i];
                     },
                     "mul");
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; }, "scale");
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; },
      [](double, double) { return 1.0; }, "add_scalar");
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; },
      "square");
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, "relu");
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return v > lo && v < hi ? 1.0 : 0.0; }, "clamp");
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); },
      "sigmoid");
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, stable_softplus, [](double v, double) { return stable_sigmoid(v); },
      "softplus");
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      },
      "silu");
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; },
      "exp");
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; }, "log");
}

// --- reductions and normalizations ----------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({}, {acc}, {x},
                     [x](const Node& o) {
                       auto gx = grad_of(x);
                       for (auto& g : gx) g += o.grad[0];
                     },
                     "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const auto sp = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += xd[(o * sp.n + k) * sp.inner + i];
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, sp](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t oo = 0; oo < sp.outer; ++oo)
                         for (std::size_t k = 0; k < sp.n; ++k)
                           for (std::size_t i = 0; i < sp.inner; ++i)
                             gx[(oo * sp.n + k) * sp.inner + i] += o.grad[oo * sp.inner + i];
                     },
                     "sum_axis");
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const std::size_t n = x.dim(axis);
  if (n == 0) throw DimensionError("mean over empty axis");
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(n));
}

Tensor global_max_pool(const Tensor& x, std::size_t n_dims) {
  if (n_dims == 0 || n_dims > x.rank()) throw DimensionError("global_max_pool rank");
  const Shape& s = x.shape();
  Shape out_shape(s.begin(), s.end() - static_cast<std::ptrdiff_t>(n_dims));
  const std::size_t groups = shape_numel(out_shape);
  const std::size_t span = x.numel() / std::max<std::size_t>(groups, 1);
  if (span == 0) throw DimensionError("global_max_pool over empty extent");
  std::vector<double> out(groups);
  std::vector<std::size_t> argmax(groups);
  const auto xd = x.data();
  for (std::size_t g = 0; g < groups; ++g) {
    std::size_t best = g * span;
    for (std::size_t i = 1; i < span; ++i) {
      if (xd[g * span + i] > xd[best]) best = g * span + i;
    }
    argmax[g] = best;
    out[g] = xd[best];
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, argmax = std::move(argmax)](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t g = 0; g < argmax.size(); ++g) gx[argmax[g]] += o.grad[g];
                     },
                     "global_max_pool");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto sp = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * sp.n + k) * sp.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sp.n; ++k) mx = std::max(mx, xd[at(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) {
        out[at(k)] = std::exp(xd[at(k)] - mx);
        z += out[at(k)];
      }
      for (std::size_t k = 0; k < sp.n; ++k) out[at(k)] /= z;
    }
  return make_result(x.shape(), std::move(out), {x},
                     [x, sp](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t oo = 0; oo < sp.outer; ++oo)
                         for (std::size_t i = 0; i < sp.inner; ++i) {
                           auto at = [&](std::size_t k) { return (oo * sp.n + k) * sp.inner + i; };
                           double dot = 0.0;
                           for (std::size_t k = 0; k < sp.n; ++k) dot += o.grad[at(k)] * o.data[at(k)];
                           for (std::size_t k = 0; k < sp.n; ++k)
                             gx[at(k)] += o.data[at(k)] * (o.grad[at(k)] - dot);
                         }
                     },
                     "softmax");
}

Tensor masked_softmax(const Tensor& x, const std::vector<bool>& mask) {
  if (x.rank() == 0 || mask.size() != x.numel()) {
    throw DimensionError("masked_softmax: mask size mismatch");
  }
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> out(x.numel(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
      if (mask[r * n + k]) mx = std::max(mx, xd[r * n + k]);
    if (!std::isfinite(mx)) throw DimensionError("masked_softmax: row with no survivors");
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!mask[r * n + k]) continue;
      out[r * n + k] = std::exp(xd[r * n + k] - mx);
      z += out[r * n + k];
    }
    for (std::size_t k = 0; k < n; ++k) out[r * n + k] /= z;
  }
  return make_result(x.shape(), std::move(out), {x},
                     [x, n, rows](const Node& o) {
                       // Masked entries have y = 0 and thus zero gradient.
                       auto gx = grad_of(x);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t k = 0; k < n; ++k) dot += o.grad[r * n + k] * o.data[r * n + k];
                         for (std::size_t k = 0; k < n; ++k)
                           gx[r * n + k] += o.data[r * n + k] * (o.grad[r * n + k] - dot);
                       }
                     },
                     "masked_softmax");
}

Tensor logsumexp(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("logsumexp of a scalar");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  const auto xd = x.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xd[r * n + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) z += std::exp(xd[r * n + k] - mx);
    out[r] = mx + std::log(z);
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, n, rows](const Node& o) {
                       auto gx = grad_of(x);
                       const auto xd = x.data();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t k = 0; k < n; ++k)
                           gx[r * n + k] += o.grad[r] * std::exp(xd[r * n + k] - o.data[r]);
                     },
                     "logsumexp");
}

Tensor layer_norm(const Tensor& x, std::size_t axis, double eps) {
  const auto sp = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  std::vector<double> inv_std(sp.outer * sp.inner);
  const double n = static_cast<double>(sp.n);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * sp.n + k) * sp.inner + i; };
      double mu = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) mu += xd[at(k)];
      mu /= n;
      double var = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) var += (xd[at(k)] - mu) * (xd[at(k)] - mu);
      var /= n;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[o * sp.inner + i] = is;
      for (std::size_t k = 0; k < sp.n; ++k) out[at(k)] = (xd[at(k)] - mu) * is;
    }
  return make_result(x.shape(), std::move(out), {x},
                     [x, sp, n, inv_std = std::move(inv_std)](const Node& o) {
                       auto gx = grad_of(x);
                       for (std::size_t oo = 0; oo < sp.outer; ++oo)
                         for (std::size_t i = 0; i < sp.inner; ++i) {
                           auto at = [&](std::size_t k) { return (oo * sp.n + k) * sp.inner + i; };
                           double mg = 0.0, mgy = 0.0;
                           for (std::size_t k = 0; k < sp.n; ++k) {
                             mg += o.grad[at(k)];
                             mgy += o.grad[at(k)] * o.data[at(k)];
                           }
                           mg /= n;
                           mgy /= n;
                           const double is = inv_std[oo * sp.inner + i];
                           for (std::size_t k = 0; k < sp.n; ++k)
                             gx[at(k)] += is * (o.grad[at(k)] - mg - o.data[at(k)] * mgy);
                         }
                     },
                     "layer_norm");
}

// --- convolutions -----------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernels) {
  if (kernels.rank() != 4) throw DimensionError("conv2d kernels must be 4-D");
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) throw DimensionError("conv2d input must be 3-D or 4-D");
  const std::size_t nb = batched ? x.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t cin = x.dim(off), h = x.dim(off + 1), w = x.dim(off + 2);
  const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != cin) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernels.dim(1)) +
                         " input channels, got " + std::to_string(cin));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError("conv2d needs odd kernel sizes, got " + std::to_string(kh) +
                      "x" + std::to_string(kw));
  }
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const long H = static_cast<long>(h), W = static_cast<long>(w);

  // Visits every (output pixel, input pixel, weight) triple once.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t c = 0; c < cin; ++c)
          for (long p = 0; p < static_cast<long>(kh); ++p)
            for (long q = 0; q < static_cast<long>(kw); ++q) {
              const std::size_t kidx = ((o * cin + c) * kh + p) * kw + q;
              const long i0 = std::max(0L, ph - p), i1 = std::min(H, H + ph - p);
              const long j0 = std::max(0L, pw - q), j1 = std::min(W, W + pw - q);
              const std::size_t ybase = (b * cout + o) * h * w;
              const std::size_t xbase = (b * cin + c) * h * w;
              for (long i = i0; i < i1; ++i) {
                const std::size_t yrow = ybase + static_cast<std::size_t>(i) * w;
                const std::size_t xrow = xbase + static_cast<std::size_t>(i + p - ph) * w;
                fn(kidx, yrow, xrow, j0, j1, q - pw);
              }
            }
  };

  const auto xd = x.data();
  const auto kd = kernels.data();
  std::vector<double> out(nb * cout * h * w, 0.0);
  for_each_tap([&](std::size_t kidx, std::size_t yrow, std::size_t xrow, long j0,
                   long j1, long dq) {
    const double kv = kd[kidx];
    for (long j = j0; j < j1; ++j) out[yrow + j] += kv * xd[xrow + j + dq];
  });
  Shape out_shape = batched ? Shape{nb, cout, h, w} : Shape{cout, h, w};
  return make_result(std::move(out_shape), std::move(out), {x, kernels},
                     [x, kernels, for_each_tap](const Node& o) {
                       auto gx = grad_of(x);
                       auto gk = grad_of(kernels);
                       const auto xd = x.data();
                       const auto kd = kernels.data();
                       const double* g = o.grad.data();
                       for_each_tap([&](std::size_t kidx, std::size_t yrow, std::size_t xrow,
                                        long j0, long j1, long dq) {
                         if (!gx.empty()) {
                           const double kv = kd[kidx];
                           for (long j = j0; j < j1; ++j) gx[xrow + j + dq] += kv * g[yrow + j];
                         }
                         if (!gk.empty()) {
                           double acc = 0.0;
                           for (long j = j0; j < j1; ++j) acc += g[yrow + j] * xd[xrow + j + dq];
                           gk[kidx] += acc;
                         }
                       });
                     },
                     "conv2d");
}

Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernel, Padding padding) {
  if (x.rank() < 2 || kernel.rank() != 2) throw DimensionError("conv1d_depthwise ranks");
  const std::size_t c = x.shape().back();
  const std::size_t len = x.shape()[x.rank() - 2];
  const std::size_t w = kernel.dim(1);
  if (kernel.dim(0) != c) throw DimensionError("conv1d_depthwise channel mismatch");
  if (w == 0) throw ConfigError("conv1d kernel width must be >= 1");
  const std::size_t seqs = x.numel() / (len * c);
  const long shift = padding == Padding::kCausal ? 0 : static_cast<long>((w - 1) / 2);
  const long L = static_cast<long>(len);

  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t s = 0; s < seqs; ++s)
      for (long t = 0; t < L; ++t)
        for (std::size_t j = 0; j < w; ++j) {
          const long src = t - static_cast<long>(j) + shift;
          if (src < 0 || src >= L) continue;
          fn((s * len + static_cast<std::size_t>(t)) * c,
             (s * len + static_cast<std::size_t>(src)) * c, j);
        }
  };

  const auto xd = x.data();
  const auto kd = kernel.data();
  std::vector<double> out(x.numel(), 0.0);
  for_each_tap([&](std::size_t yrow, std::size_t xrow, std::size_t j) {
    for (std::size_t ch = 0; ch < c; ++ch) out[yrow + ch] += kd[ch * w + j] * xd[xrow + ch];
  });
  return make_result(x.shape(), std::move(out), {x, kernel},
                     [x, kernel, for_each_tap, c, w](const Node& o) {
                       auto gx = grad_of(x);
                       auto gk = grad_of(kernel);
                       const auto xd = x.data();
                       const auto kd = kernel.data();
                       for_each_tap([&](std::size_t yrow, std::size_t xrow, std::size_t j) {
                         for (std::size_t ch = 0; ch < c; ++ch) {
                           const double g = o.grad[yrow + ch];
                           if (!gx.empty()) gx[xrow + ch] += kd[ch * w + j] * g;
                           if (!gk.empty()) gk[ch * w + j] += xd[xrow + ch] * g;
                         }
                       });
                     },
                     "conv1d_depthwise");
}

// --- losses -----------------------------------------------------------------

Tensor nll(const Tensor& probs, const std::vector<std::size_t>& labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size() || labels.empty()) {
    throw DimensionError("nll: probs must be [n x G] with n labels");
  }
  const std::size_t n = probs.dim(0), g = probs.dim(1);
  const auto pd = probs.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= g) throw DataError("label " + std::to_string(labels[i]) + " >= G");
    const double p = pd[i * g + labels[i]];
    if (!(p > 0.0)) throw DomainError("nll: probability of true class is zero");
    acc -= std::log(p);
  }
  return make_result({}, {acc / static_cast<double>(n)}, {probs},
                     [probs, labels, n, g](const Node& o) {
                       auto gp = grad_of(probs);
                       const auto pd = probs.data();
                       for (std::size_t i = 0; i < n; ++i) {
                         const std::size_t k = i * g + labels[i];
                         gp[k] -= o.grad[0] / (static_cast<double>(n) * pd[k]);
                       }
                     },
                     "nll");
}

Tensor cv_squared(const Tensor& v) {
  if (v.rank() != 1 || v.numel() == 0) throw DimensionError("cv_squared expects a vector");
  const auto vd = v.data();
  const double n = static_cast<double>(v.numel());
  double s = 0.0, s2 = 0.0;
  for (double x : vd) {
    s += x;
    s2 += x * x;
  }
  // CV^2 = var / mean^2 = n * sum(x^2) / sum(x)^2 - 1
  const double value = s == 0.0 ? 0.0 : n * s2 / (s * s) - 1.0;
  return make_result({}, {value}, {v},
                     [v, n, s, s2](const Node& o) {
                       if (s == 0.0) return;
                       auto gv = grad_of(v);
                       const auto vd = v.data();
                       for (std::size_t i = 0; i < gv.size(); ++i) {
                         gv[i] += o.grad[0] * (2.0 * n * vd[i] / (s * s) - 2.0 * n * s2 / (s * s * s));
                       }
                     },
                     "cv_squared");
}

}  // namespace moemba::ops
