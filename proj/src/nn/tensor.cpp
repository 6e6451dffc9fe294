#include "nn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace canav::nn {

namespace {
std::atomic<uint64_t> g_next_id{1};
thread_local int g_no_grad_depth = 0;

NodePtr new_node(std::vector<int> shape, std::vector<real> value,
                 bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  if (requires_grad) n->ensure_grad();
  return n;
}
}  // namespace

int64_t shape_size(const std::vector<int>& shape) {
  int64_t s = 1;
  for (int d : shape) s *= d;
  return s;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGrad::NoGrad() { ++g_no_grad_depth; }
NoGrad::~NoGrad() { --g_no_grad_depth; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::vector<real> v(static_cast<size_t>(shape_size(shape)), real(0));
  return Tensor(new_node(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, real x, bool requires_grad) {
  std::vector<real> v(static_cast<size_t>(shape_size(shape)), x);
  return Tensor(new_node(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from(std::vector<real> data, std::vector<int> shape,
                    bool requires_grad) {
  if (static_cast<int64_t>(data.size()) != shape_size(shape))
    fail(ErrorKind::invalid_argument,
         "tensor: data length " + std::to_string(data.size()) +
             " does not match shape " + shape_str(shape));
  check_finite("from", data);
  return Tensor(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(real v) { return from({v}, {1}); }

real Tensor::item() const {
  if (size() != 1)
    fail(ErrorKind::invalid_argument,
         "item: tensor has shape " + shape_str(shape()) + ", expected scalar");
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return Tensor(new_node(node_->shape, node_->value, false));
}

void check_finite(const char* op, const std::vector<real>& v) {
  for (real x : v) {
    if (!std::isfinite(x))
      fail(ErrorKind::runtime,
           std::string("non-finite value produced by op '") + op + "'");
  }
}

Tensor make_op(const char* op, std::vector<int> shape, std::vector<real> value,
               std::vector<NodePtr> parents,
               std::function<void(Node&)> backward_fn) {
  check_finite(op, value);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p && p->requires_grad) {
        needs_grad = true;
        break;
      }
  }
  auto n = new_node(std::move(shape), std::move(value), needs_grad);
  n->op = op;
  if (needs_grad) {
    n->parents = std::move(parents);
    n->backward = std::move(backward_fn);
  }
  return Tensor(n);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    fail(ErrorKind::invalid_argument,
         "backward: loss must be a defined scalar tensor");
  Node* root = loss.node();
  if (!root->requires_grad) return;  // nothing reachable wants gradients

  // Iterative DFS collecting the requires_grad subgraph, then replay in
  // descending creation order (valid topological order by construction).
  std::vector<Node*> order;
  std::vector<std::pair<Node*, size_t>> stack;
  std::vector<Node*> visited;  // kept sorted by pointer
  auto insert_visited = [&](Node* n) {
    auto it = std::lower_bound(visited.begin(), visited.end(), n);
    if (it != visited.end() && *it == n) return false;
    visited.insert(it, n);
    return true;
  };

  stack.emplace_back(root, 0);
  insert_visited(root);
  order.push_back(root);
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx >= n->parents.size()) {
      stack.pop_back();
      continue;
    }
    Node* p = n->parents[idx++].get();
    if (p && p->requires_grad && insert_visited(p)) {
      order.push_back(p);
      stack.emplace_back(p, 0);
    }
  }

  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  for (Node* n : order) n->ensure_grad();
  root->grad[0] += real(1);
  for (Node* n : order) {
    if (n->backward) n->backward(*n);
  }
}

}  // namespace canav::nn
