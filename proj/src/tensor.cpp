#include "acs/tensor.hpp"

#include <numeric>
#include <unordered_set>

#include "acs/errors.hpp"

namespace acs::ad {

std::size_t numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  require(numel(shape) == values.size(),
          "Tensor: shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
              " values");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
  require(size() == 1, "Tensor::item on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(node_->shape, node_->data, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, const char* op,
                           std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  for (const auto& in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

std::vector<const detail::Node*> topological_order(const Tensor& loss) {
  // Iterative post-order DFS; the result lists producers before consumers.
  std::vector<const detail::Node*> order;
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<const detail::Node*, std::size_t>> stack;
  const detail::Node* root = loss.node_ptr().get();
  if (!root->requires_grad) return order;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1,
          "backward: loss must be a scalar, got shape " +
              (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;
  auto order = topological_order(loss);

  // Intermediate gradients are freed after the sweep; a second call
  // accumulates into leaves exactly once more.
  std::vector<detail::Node*> interior;
  loss.node().grad_buffer()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = const_cast<detail::Node*>(*it);
    if (!node->backward_fn) continue;
    interior.push_back(node);
    if (node->grad.empty()) continue;
    node->backward_fn(*node);
  }
  for (auto* node : interior) node->grad.clear();
}

}  // namespace acs::ad
