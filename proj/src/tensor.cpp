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

#include "moemba/tensor.hpp"

#include <cmath>
#include <sstream>

#include "moemba/errors.hpp"

namespace moemba {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::span<double> Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  auto t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t k = 0;
  for (auto i : index) {
    if (i >= s[k]) throw DimensionError("index out of range");
    flat = flat * s[k] + i;
    ++k;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

std::span<const double> Tensor::grad_view() const { return node_->grad; }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->data); }

namespace {
thread_local Tape* active_tape = nullptr;
}  // namespace

Tape* Tape::active() { return active_tape; }

void Tape::record(Entry entry) { entries_.push_back(std::move(entry)); }

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got " +
                     shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() on a loss that was not recorded");
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not on a path to the loss
    it->backward(*it->output);
    // Intermediate buffers are dead once consumed.
    std::vector<double>().swap(it->output->grad);
  }
  entries_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(active_tape) { active_tape = &tape; }

TapeScope::~TapeScope() { active_tape = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, Tape::BackwardFn backward,
                   const char* name) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite value produced by ") + name);
    }
  }
  auto out = Tensor::from(std::move(shape), std::move(data));
  Tape* tape = Tape::active();
  if (tape == nullptr) return out;
  bool tracked = false;
  for (const auto& in : inputs) tracked = tracked || in.requires_grad();
  if (!tracked) return out;
  out.set_requires_grad(true);
  Tape::Entry entry{out.node(), {}, std::move(backward), name};
  entry.inputs.reserve(inputs.size());
  for (const auto& in : inputs) entry.inputs.push_back(in.node());
  tape->record(std::move(entry));
  return out;
}

bool wants_grad(const Tensor& t) { return t.requires_grad(); }

std::span<double> grad_of(const Tensor& t) {
  if (!t.requires_grad()) return {};
  return t.node()->ensure_grad();
}

}  // namespace detail

}  // namespace moemba
