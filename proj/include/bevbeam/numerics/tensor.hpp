// Copyright 2026 The bevbeam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bevbeam/numerics/array.hpp"

namespace bevbeam {

template <class T>
struct TensorNode {
  Array<T> value;
  Array<T> grad;  // allocated on first accumulation
  bool requires_grad = false;

  /// Adds `g` into the gradient buffer, allocating it on first use.
  void accumulate(const T* g) {
    if (grad.data.empty()) grad = Array<T>(value.shape);
    T* dst = grad.ptr();
    const std::size_t n = grad.size();
    for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
  }
  T* grad_buffer() {
    if (grad.data.empty()) grad = Array<T>(value.shape);
    return grad.ptr();
  }
};

/// Handle to a differentiable array. Copies share the underlying node, so a
/// parameter handle held by a module and the one seen by the tape are the
/// same object.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Array<T> value, bool requires_grad = false)
      : node_(std::make_shared<TensorNode<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t ndim() const { return node_->value.ndim(); }
  const Array<T>& value() const { return node_->value; }
  Array<T>& mutable_value() { return node_->value; }
  const T* data() const { return node_->value.ptr(); }
  T* mutable_data() { return node_->value.ptr(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return !node_->grad.data.empty(); }
  /// Gradient buffer; zero-filled with the value's shape if never written.
  const Array<T>& grad() const {
    if (node_->grad.data.empty()) node_->grad = Array<T>(node_->value.shape);
    return node_->grad;
  }
  void zero_grad() { node_->grad = Array<T>(); }

  TensorNode<T>* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

/// Ordered record of executed differentiable operations. Backward replays the
/// recorded closures in exact reverse execution order; each closure adds into
/// the gradient buffers of its inputs, so shared inputs receive summed
/// gradients.
template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }

  /// True when an op with these inputs must be recorded.
  template <class... Ts>
  bool needs_grad(const Ts&... inputs) const {
    return recording_ && (... || (inputs.defined() && inputs.requires_grad()));
  }
  bool needs_grad_any(const std::vector<Tensor<T>>& inputs) const {
    if (!recording_) return false;
    for (const auto& t : inputs)
      if (t.defined() && t.requires_grad()) return true;
    return false;
  }

  void record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape. Throws ContractError for
  /// a non-scalar loss or an empty tape.
  void backward(const Tensor<T>& loss);

  void clear() { entries_.clear(); }

 private:
  bool recording_;
  std::vector<std::function<void()>> entries_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace bevbeam
