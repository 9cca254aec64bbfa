#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rfmia {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until populated by backward
  bool requires_grad = false;
  // Tape linkage. Empty for leaves and for tensors built with grad mode off.
  std::vector<std::shared_ptr<Node>> parents;
  // Receives the gradient of this node and accumulates into parent gradients
  // (same order as `parents`).
  std::function<void(const std::vector<double>& out_grad,
                     std::vector<std::vector<double>*>& parent_grads)>
      backward;

  bool taped() const { return static_cast<bool>(backward); }
};

}  // namespace detail

/// Dense row-major float64 array that can take part in reverse-mode
/// differentiation. Copies share storage (handle semantics), like most
/// tensor libraries; use clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vector(std::span<const double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  bool is_scalar() const { return size() == 1; }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  double item() const;
  double& at(std::size_t i) { return node_->data.at(i); }
  double at(std::size_t i) const { return node_->data.at(i); }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  /// True when this tensor was produced by a recorded operation.
  bool taped() const { return node_->taped(); }

  Tensor clone() const;    // deep copy, detached, keeps requires_grad=false
  Tensor detach() const;   // shares nothing with the tape; copies data

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// RAII switch for tape recording on the current thread.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Runs reverse-mode accumulation from a scalar loss. Populates grad() on
/// every leaf that requires grad and is reachable, then drops the tape.
/// Throws StateError if `loss` is not a taped scalar.
void backward(const Tensor& loss);

/// Gradient of a scalar w.r.t. the given leaves, without touching the
/// stored grad() of any tensor. The tape is kept intact.
std::vector<std::vector<double>> gradients(const Tensor& output,
                                           std::span<const Tensor> wrt);

namespace ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [b,in], w [out,in], bias [out] -> x w^T + bias, shape [b,out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
/// Column-wise concatenation of two row-aligned matrices.
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Same values under a new shape with equal element count.
Tensor reshape(const Tensor& a, Shape shape);
/// Multiplies row r of a [b,d] by the constant factors[r].
Tensor scale_rows(const Tensor& a, std::span<const double> factors);

}  // namespace ad

double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace rfmia
