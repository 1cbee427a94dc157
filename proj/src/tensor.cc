// Copyright (c) 2026 The mlpool Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mlpool/tensor.h"

#include <cmath>
#include <unordered_set>

#include "mlpool/errors.h"

namespace mlpool {

namespace {

thread_local bool grad_enabled = true;

std::shared_ptr<internal::Node> MakeLeaf(Shape shape, std::vector<double> values,
                                         bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " +
                                     ShapeToString(shape));
  }
  if (ShapeSize(shape) != values.size()) {
    throw DimensionError("shape " + ShapeToString(shape) + " needs " +
                         std::to_string(ShapeSize(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor constructor");
  }
  auto node = std::make_shared<internal::Node>();
  node->op = "leaf";
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::size_t ShapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double>& internal::Node::EnsureGrad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::Full(Shape shape, double value, bool requires_grad) {
  std::size_t n = ShapeSize(shape);
  return Tensor(MakeLeaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::FromVector(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(MakeLeaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return Tensor(MakeLeaf({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         ShapeToString(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + ShapeToString(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t i) const { return node_->value.at(i); }

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a matrix");
  return node_->value.at(row * node_->shape[1] + col);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->is_leaf; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::ZeroGrad() {
  node_->grad.clear();
}

std::span<double> Tensor::mutable_values() {
  if (!node_->is_leaf) {
    throw ContractError("cannot mutate the output of op '" + node_->op +
                        "'; only leaves are mutable");
  }
  return node_->value;
}

Tensor Tensor::Detach(bool requires_grad) const {
  return Tensor(MakeLeaf(node_->shape, node_->value, requires_grad));
}

const std::string& Tensor::op() const { return node_->op; }

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }
bool GradEnabled() { return grad_enabled; }

void Backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        (loss.defined() ? ShapeToString(loss.shape()) : std::string("<undefined>")));
  }
  internal::Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<internal::Node*> order;
  std::unordered_set<internal::Node*> visited;
  std::vector<std::pair<internal::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      internal::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Intermediate gradients are per-call, allocated on first accumulation and
  // released once propagated; leaf gradients accumulate.
  auto release = [](internal::Node* n) { std::vector<double>().swap(n->grad); };
  for (internal::Node* n : order) {
    if (!n->is_leaf) release(n);
  }
  root->EnsureGrad()[0] += 1.0;

  try {
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      internal::Node* n = *it;
      if (n->is_leaf || n->grad.empty()) continue;
      for (double g : n->grad) {
        if (!std::isfinite(g)) {
          throw NumericError("non-finite gradient at node '" + n->op + "' " +
                             ShapeToString(n->shape));
        }
      }
      if (n->backward) n->backward(*n);
      release(n);
    }
  } catch (...) {
    for (internal::Node* n : order) {
      if (!n->is_leaf) release(n);
    }
    throw;
  }
}

}  // namespace mlpool
