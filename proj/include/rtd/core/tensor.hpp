#pragma once

// Dense float64 tensors with a dynamic reverse-mode tape. A Tensor is a cheap
// handle to a graph node; ops create new nodes that remember their inputs
// whenever gradient recording is on and some input requires a gradient.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rtd {

using Shape = std::vector<std::size_t>;
using TokenId = std::int32_t;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  // Direct write access; intended for leaves (parameter init, optimizer).
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t i, std::size_t j) const { return node_->value.at(i * node_->shape.at(1) + j); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient view; empty span when nothing has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  const char* op_name() const { return node_->op; }
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a grad.
// Leaves not reachable from `loss` are left untouched, so zero them first.
void backward(const Tensor& loss);

bool grad_enabled();

// Disables tape recording for the current thread within its scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Checked mode: forward outputs and backward gradients are scanned for
// NaN/Inf, raising NumericFault with the offending op name. On by default.
bool checked_mode();
void set_checked_mode(bool on);

}  // namespace rtd
