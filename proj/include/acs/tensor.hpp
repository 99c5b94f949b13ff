#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace acs::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

namespace detail {

// One vertex of the computation graph. A node owns its forward value, its
// (lazily allocated) gradient buffer, and the closure that propagates its
// gradient into its parents.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor of 64-bit reals taking part in reverse-mode
/// differentiation. Copies share the underlying node (reference semantics,
/// like a handle); forward values are not mutated once an op has consumed
/// them, except for leaf parameters updated by an optimizer between graphs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Mutable access to forward values. Intended for leaves (parameter init,
  /// optimizer updates); mutating a non-leaf after use invalidates gradients.
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  /// Gradient values; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;

  const char* op_name() const { return node_->op; }

  // Graph construction hook used by the op implementations.
  static Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward_fn);
  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Reverse sweep from a scalar loss. Gradients are summed into every
/// requires_grad tensor reachable from `loss`; calling twice accumulates.
void backward(const Tensor& loss);

/// Nodes reachable from `loss` that carry gradient, producers before
/// consumers. backward() walks this list in reverse, once per node.
std::vector<const detail::Node*> topological_order(const Tensor& loss);

}  // namespace acs::ad
