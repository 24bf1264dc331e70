#pragma once

// Dense row-major tensors with an optional gradient slot, plus the tape that
// links op results to their inputs for reverse-mode differentiation.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace rowgraph::diff {

using Shape = std::vector<std::size_t>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad;
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

// While alive, ops on this thread record no tape.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : node_(std::make_shared<Node<T>>()) {}

  explicit Tensor(Shape shape, T fill = T{0}, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    check_extents(shape);
    node_->value.assign(numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    check_extents(shape);
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + to_string(shape));
    }
    node_->value = std::move(data);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  static Tensor from_node(std::shared_ptr<Node<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  T& operator[](std::size_t i) { return node_->value[i]; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }

  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values, cut from the tape.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  const char* op() const { return node_->op; }

 private:
  static void check_extents(const Shape& shape) {
    for (auto e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    }
  }

  std::shared_ptr<Node<T>> node_;
};

// Builds an op result. The tape link is recorded only when grad mode is on and
// some input requires a gradient.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward, const char* op) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool track =
      grad_enabled() &&
      std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

// Reverse sweep from `root`. The root must be a scalar unless a seed gradient
// of matching length is supplied. Gradients accumulate; call zero_grad on
// leaves between independent sweeps.
template <class T>
void backward(const Tensor<T>& root, std::span<const T> seed = {}) {
  auto* root_node = root.node().get();
  if (!root_node->requires_grad) return;
  if (seed.empty() && root.size() != 1) {
    throw ShapeError("backward() needs a seed for non-scalar root " + to_string(root.shape()));
  }
  if (!seed.empty() && seed.size() != root.size()) {
    throw ShapeError("backward() seed length mismatch");
  }

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root_node, 0}};
  visited.insert(root_node);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& g = root_node->ensure_grad();
  if (seed.empty()) {
    g[0] += T{1};
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace rowgraph::diff
