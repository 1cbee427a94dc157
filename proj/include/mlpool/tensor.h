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

#ifndef MLPOOL_TENSOR_H_
#define MLPOOL_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mlpool {

using Shape = std::vector<std::size_t>;

std::size_t ShapeSize(const Shape& shape);
std::string ShapeToString(const Shape& shape);

namespace internal {

// One vertex of the reverse-mode tape. Leaves are created by the factory
// functions; every op creates a non-leaf holding its inputs and a closure
// that accumulates the op's vector-Jacobian product into them.
struct Node {
  std::string op;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& EnsureGrad();
};

}  // namespace internal

// Dense row-major array of doubles that may take part in the autodiff tape.
// Copies are shallow: two Tensor handles may refer to the same node.
// Values are immutable once constructed, except leaves via mutable_values().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<internal::Node> node) : node_(std::move(node)) {}

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, double value, bool requires_grad = false);
  static Tensor FromVector(Shape shape, std::vector<double> values,
                           bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void ZeroGrad();

  // Leaves only; throws ContractError for op outputs, which are on the tape.
  std::span<double> mutable_values();

  // New leaf holding a copy of the values, detached from any tape.
  Tensor Detach(bool requires_grad = false) const;

  const std::string& op() const;
  internal::Node* node() const { return node_.get(); }
  const std::shared_ptr<internal::Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<internal::Node> node_;
};

// Populates d(loss)/d(leaf) on every requires_grad leaf reachable from
// |loss|. Leaf gradients accumulate across calls until ZeroGrad().
void Backward(const Tensor& loss);

// Ops executed while any guard is alive on the current thread do not record
// tape edges. Used for inference.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

}  // namespace mlpool

#endif  // MLPOOL_TENSOR_H_
