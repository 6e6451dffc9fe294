#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace canav::nn {

#ifdef CANAV_REAL32
using real = float;
#else
using real = double;
#endif

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One tape entry: the op output plus what its backward rule needs. Values are
// immutable after the forward pass; grad accumulates during backward; only the
// optimizer rewrites leaf parameter values, between steps.
struct Node {
  std::vector<int> shape;
  std::vector<real> value;
  std::vector<real> grad;
  bool requires_grad = false;
  uint64_t id = 0;  // creation order; the tape's topological key
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), real(0));
  }
};

int64_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, real v, bool requires_grad = false);
  static Tensor from(std::vector<real> data, std::vector<int> shape,
                     bool requires_grad = false);
  static Tensor scalar(real v);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return node_->size(); }

  std::span<const real> values() const {
    return {node_->value.data(), node_->value.size()};
  }
  std::span<const real> grad() const {
    return {node_->grad.data(), node_->grad.size()};
  }
  real item() const;
  real at(int64_t i) const { return node_->value[static_cast<size_t>(i)]; }

  bool requires_grad() const { return node_->requires_grad; }

  // Same values, cut from the tape.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

// Thread-local forward-mode switch: inside a NoGrad scope, ops keep computing
// identical values but record nothing on the tape.
bool grad_enabled();
class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;
};

// Op constructor used by every op implementation. Drops parents/backward when
// no input requires grad (or grads are disabled) so no-grad forwards carry no
// graph. Verifies the output is finite.
Tensor make_op(const char* op, std::vector<int> shape, std::vector<real> value,
               std::vector<NodePtr> parents, std::function<void(Node&)> backward);

void check_finite(const char* op, const std::vector<real>& v);

// Reverse pass from a scalar loss. Every requires_grad tensor reachable from
// the loss accumulates d(loss)/d(tensor); disconnected tensors keep zero grads.
void backward(const Tensor& loss);

}  // namespace canav::nn
