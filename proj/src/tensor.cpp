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

#include "macs/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_map>

#include "macs/error.hpp"

namespace macs {

namespace {

std::atomic<std::uint64_t> g_next_id{1};

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
  if (values.size() != numel(shape)) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " needs " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  node->shape = std::move(shape);
  node->data = std::move(values);
  return node;
}

}  // namespace

std::size_t numel(const Shape& shape) {
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

Tensor::Tensor() = default;

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in " + shape_str(shape));
  }
  std::vector<double> values(macs::numel(shape), value);
  Tensor t(new_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in " + shape_str(shape));
  }
  Tensor t(new_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
  if (!node_->is_leaf()) throw UsageError("mutable_data() on a non-leaf tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw UsageError("set_requires_grad() on a non-leaf tensor");
  node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return node_->is_leaf(); }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  return const_cast<Tensor*>(this)->mutable_grad();
}

// Leaves that require a gradient but were never reached read as zero.
std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) {
    if (!node_->requires_grad || !node_->is_leaf()) throw UsageError("tensor has no gradient");
    node_->grad.assign(node_->data.size(), 0.0);
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  else if (node_->requires_grad && node_->is_leaf()) node_->grad.assign(node_->data.size(), 0.0);
}

const char* Tensor::op_name() const { return node_->op; }

std::uint64_t Tensor::node_id() const { return node_->id; }

Tensor Tensor::detach() const {
  auto node = new_node(node_->shape, node_->data);
  return Tensor(std::move(node));
}

Tensor Tensor::reshape(Shape new_shape) const {
  if (macs::numel(new_shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_str(shape()) + " to " + shape_str(new_shape));
  }
  return make_result(std::move(new_shape), node_->data, {*this}, "reshape",
                     [](const detail::Node&, std::span<const double> g,
                        std::span<std::vector<double>* const> gin) {
                       auto& gx = *gin[0];
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::initializer_list<Tensor> inputs, const char* op,
                           detail::BackwardFn backward) {
  return make_result(std::move(shape), std::move(values), std::vector<Tensor>(inputs), op,
                     std::move(backward));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           const std::vector<Tensor>& inputs, const char* op,
                           detail::BackwardFn backward) {
  auto node = new_node(std::move(shape), std::move(values));
  node->op = op;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.node_->requires_grad; });
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw UsageError("backward() needs a scalar root, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Collect every node reachable through requires_grad edges.
  std::vector<detail::Node*> order;
  std::unordered_map<const detail::Node*, bool> seen;
  std::vector<detail::Node*> stack{node_.get()};
  seen[node_.get()] = true;
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (!in->requires_grad) continue;
      if (seen.emplace(in.get(), true).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  std::unordered_map<const detail::Node*, std::vector<double>> grads;
  grads[node_.get()] = {1.0};

  for (auto* n : order) {
    auto it = grads.find(n);
    if (it == grads.end()) continue;
    std::vector<double> g = std::move(it->second);
    grads.erase(it);

    if (n->is_leaf()) {
      if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) n->grad[i] += g[i];
      continue;
    }

    std::vector<std::vector<double>*> gin(n->inputs.size(), nullptr);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      const auto* in = n->inputs[i].get();
      if (!in->requires_grad) continue;
      auto& buf = grads[in];
      if (buf.empty()) buf.assign(in->data.size(), 0.0);
      gin[i] = &buf;
    }
    n->backward(*n, g, gin);
  }
}

}  // namespace macs
