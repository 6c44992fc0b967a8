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

#pragma once

#include <cmath>
#include <random>

#include "moemba/rng.hpp"
#include "moemba/tensor.hpp"

namespace moemba {

// Trainable tensor with entries drawn from U(-bound, bound).
inline Tensor uniform_parameter(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Tensor fan_in_parameter(Shape shape, std::size_t fan_in, Rng& rng) {
  return uniform_parameter(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace moemba
