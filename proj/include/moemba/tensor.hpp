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

// Dense f64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle to shared storage. Operations in ops.hpp
// record themselves on the thread's active Tape whenever at least one
// operand requires a gradient; Tape::backward() then replays the records
// in reverse order and accumulates into every tracked leaf.

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace moemba {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  std::span<double> ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  // Leaf that participates in differentiation.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  // Gradient buffer; zeros of the right shape when nothing was accumulated.
  std::vector<double> grad() const;
  std::span<const double> grad_view() const;
  void zero_grad();

  // Deep copy without gradient history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of differentiable operations.
class Tape {
 public:
  // Receives the output node; reads out.grad (and out.data when useful).
  using BackwardFn = std::function<void(const detail::Node& out)>;

  struct Entry {
    std::shared_ptr<detail::Node> output;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    BackwardFn backward;
    const char* name;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Entry entry);
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  // Seeds d(loss)/d(loss) = 1 and walks the entries in reverse. The tape
  // is cleared afterwards; leaf gradients accumulate across calls.
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Entry> entries_;
};

// Makes a tape the active recorder for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

// Builds an op result. When a tape is active and any input is tracked the
// result is tracked too and `backward` is recorded. Throws NumericalError
// if the output contains NaN/Inf.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, Tape::BackwardFn backward,
                   const char* name);

// Accumulates into `t`'s gradient when `t` is tracked.
bool wants_grad(const Tensor& t);
std::span<double> grad_of(const Tensor& t);

}  // namespace detail

}  // namespace moemba
