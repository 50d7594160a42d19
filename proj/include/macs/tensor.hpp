/*
 * Copyright 2026 The macs-lab Authors
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

#ifndef MACS_TENSOR_HPP
#define MACS_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace macs {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;

/// Backward rule of one recorded op. `grad_in[i]` is null when input i does
/// not require a gradient; otherwise it points at a buffer of the input's
/// size that the rule must accumulate into.
using BackwardFn = std::function<void(const Node& self, std::span<const double> grad_out,
                                      std::span<std::vector<double>* const> grad_in)>;

struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  // Persistent gradient; only populated on leaves.
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";

  bool is_leaf() const { return inputs.empty() && !backward; }
};

}  // namespace detail

/// Dense row-major float64 array with an optional reverse-mode tape.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Every op result that depends on a `requires_grad` input records its inputs
/// and a backward rule; node ids are issued from a global monotone counter,
/// so sorting reachable nodes by descending id is a valid reverse topological
/// order. The graph is owned by the result handles and released when they go
/// out of scope.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  bool defined() const { return static_cast<bool>(node_); }

  std::span<const double> data() const;
  /// Writable view of a leaf's values. Throws UsageError on op results, whose
  /// values may be saved by their backward rule.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Accumulates d(this)/d(leaf) into every reachable leaf that requires a
  /// gradient. `this` must be a scalar.
  void backward() const;

  /// Copy of the values with no graph attachment.
  Tensor detach() const;
  /// Same values viewed under a new shape (element count must match).
  Tensor reshape(Shape shape) const;

  const char* op_name() const;
  std::uint64_t node_id() const;

  /// Builds an op result. Inputs and the backward rule are only recorded if
  /// at least one input requires a gradient.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::initializer_list<Tensor> inputs, const char* op,
                            detail::BackwardFn backward);
  static Tensor make_result(Shape shape, std::vector<double> values,
                            const std::vector<Tensor>& inputs, const char* op,
                            detail::BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

}  // namespace macs

#endif  // MACS_TENSOR_HPP
