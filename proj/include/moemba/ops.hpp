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

// Differentiable tensor operations.
//
// Broadcasting is limited to tensor-scalar ops; everything else requires
// matched shapes. Use repeat_leading / repeat_trailing to expand explicitly.

#pragma once

#include <cstddef>
#include <vector>

#include "moemba/tensor.hpp"

namespace moemba::ops {

// --- shape plumbing ---------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
// Swaps two axes (materialized copy).
Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);
// [s...] -> [n, s...]
Tensor repeat_leading(const Tensor& x, std::size_t n);
// [s...] -> [s..., suffix...]
Tensor repeat_trailing(const Tensor& x, const Shape& suffix);
// Rows of a tensor along axis 0.
Tensor index_select(const Tensor& x, const std::vector<std::size_t>& rows);
// Inverse of index_select: places row r of x at rows[r] of a zero tensor
// with `n_rows` rows.
Tensor scatter_rows(const Tensor& x, const std::vector<std::size_t>& rows,
                    std::size_t n_rows);
// Column j of a matrix, shape [m].
Tensor column(const Tensor& x, std::size_t j);

// --- linear algebra ---------------------------------------------------------

// [m x k] * [k x p] -> [m x p]
Tensor matmul(const Tensor& a, const Tensor& b);

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Hadamard product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
// Gradient passes only strictly inside (lo, hi).
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor sigmoid(const Tensor& x);
// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor exp(const Tensor& x);
// Throws DomainError on non-positive input.
Tensor log(const Tensor& x);

// --- reductions and normalizations ----------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Removes `axis`.
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);
// Max over the trailing `n_dims` axes (global max pooling).
Tensor global_max_pool(const Tensor& x, std::size_t n_dims);
Tensor softmax(const Tensor& x, std::size_t axis);
// Softmax restricted to entries whose mask is true; the rest are exactly
// zero. Mask is row-major over the same shape, rows along the last axis.
Tensor masked_softmax(const Tensor& x, const std::vector<bool>& mask);
// log-sum-exp over the last axis; removes that axis.
Tensor logsumexp(const Tensor& x);
// Zero mean, unit (population) variance along `axis`. No affine terms.
Tensor layer_norm(const Tensor& x, std::size_t axis, double eps = 1e-5);

// --- convolutions -----------------------------------------------------------

// Cross-correlation with zero "same" padding. x is [C_in, H, W] or
// [B, C_in, H, W]; kernels [C_out, C_in, k_h, k_w] with odd k_h, k_w.
Tensor conv2d(const Tensor& x, const Tensor& kernels);

enum class Padding { kCausal, kSame };

// Depthwise 1-D convolution along the time axis of a channels-last tensor
// x = [..., L, C] with kernel [C, w]:
//   causal: y[t] = sum_j k[j] * x[t - j]
//   same:   y[t] = sum_j k[j] * x[t - j + (w - 1) / 2]
// Out-of-range samples read as zero.
Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernel, Padding padding);

// --- losses -----------------------------------------------------------------

// Mean over rows of -log(probs[row, label]).
Tensor nll(const Tensor& probs, const std::vector<std::size_t>& labels);
// Squared coefficient of variation with population variance. Zero vector
// maps to 0.
Tensor cv_squared(const Tensor& v);

}  // namespace moemba::ops
