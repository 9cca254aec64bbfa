#include "rfmia/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "rfmia/errors.hpp"

namespace rfmia {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

bool needs_grad(const Tensor& t) { return t.requires_grad() || t.taped(); }

using BackwardFn = decltype(detail::Node::backward);

// Builds the output node and, when recording, wires it into the tape.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor* in : inputs) any = any || needs_grad(*in);
    if (any) {
      for (const Tensor* in : inputs) node->parents.push_back(in->node());
      node->backward = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t r, const char* op) {
  if (a.rank() != r) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) +
                         ", got " + shape_str(a.shape()));
  }
}

// Reverse topological order of the taped subgraph rooted at `root`.
std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->taped() && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

std::unordered_map<detail::Node*, std::vector<double>> run_backward(detail::Node* root) {
  std::unordered_map<detail::Node*, std::vector<double>> grads;
  grads[root] = std::vector<double>(root->data.size(), 1.0);
  for (detail::Node* node : topo_order(root)) {
    auto it = grads.find(node);
    if (it == grads.end()) continue;
    const std::vector<double> out_grad = it->second;
    std::vector<std::vector<double>*> parent_grads;
    parent_grads.reserve(node->parents.size());
    for (const auto& p : node->parents) {
      if (p->requires_grad || p->taped()) {
        auto& g = grads[p.get()];
        if (g.empty()) g.assign(p->data.size(), 0.0);
        parent_grads.push_back(&g);
      } else {
        parent_grads.push_back(nullptr);
      }
    }
    node->backward(out_grad, parent_grads);
  }
  return grads;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor() : Tensor(Shape{0}) {}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->data.assign(numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<detail::Node>()) {
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::span<const double> v) {
  return Tensor(Shape{v.size()}, std::vector<double>(v.begin(), v.end()));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor(Shape{rows, cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= rank()) throw DimensionError("tensor: axis out of range for " + shape_str(shape()));
  return node_->shape[i];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return node_->data.at(r * node_->shape.at(1) + c);
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->data.at(r * node_->shape.at(1) + c);
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (taped()) throw StateError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data); }

Tensor Tensor::detach() const { return clone(); }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) {
  g_grad_enabled = enabled;
}

GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.taped()) throw StateError("backward: loss is not on the tape");
  if (!loss.is_scalar()) {
    throw StateError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  }
  detail::Node* root = loss.node().get();
  auto grads = run_backward(root);
  // Leaves accumulate; interior nodes are released.
  for (auto& [node, g] : grads) {
    if (node->taped() || !node->requires_grad) continue;
    if (node->grad.empty()) {
      node->grad = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
    }
  }
  // Hold every taped node until all links are cut; clearing parents frees them.
  std::vector<std::shared_ptr<detail::Node>> keep_alive;
  const auto order = topo_order(root);
  for (detail::Node* node : order)
    for (const auto& p : node->parents) keep_alive.push_back(p);
  for (detail::Node* node : order) {
    node->backward = nullptr;
    node->parents.clear();
  }
}

std::vector<std::vector<double>> gradients(const Tensor& output, std::span<const Tensor> wrt) {
  if (!output.is_scalar()) throw StateError("gradients: output must be a scalar");
  std::vector<std::vector<double>> out;
  out.reserve(wrt.size());
  if (!output.taped()) {
    for (const Tensor& w : wrt) out.emplace_back(w.size(), 0.0);
    return out;
  }
  auto grads = run_backward(output.node().get());
  for (const Tensor& w : wrt) {
    auto it = grads.find(w.node().get());
    out.push_back(it == grads.end() ? std::vector<double>(w.size(), 0.0) : it->second);
  }
  return out;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

namespace ad {

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [](const std::vector<double>& g, std::vector<std::vector<double>*>& pg) {
                       for (auto* p : pg) {
                         if (!p) continue;
                         for (std::size_t i = 0; i < g.size(); ++i) (*p)[i] += g[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [](const std::vector<double>& g, std::vector<std::vector<double>*>& pg) {
                       if (pg[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                       if (pg[1])
                         for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [an, bn](const std::vector<double>& g, std::vector<std::vector<double>*>& pg) {
                       if (pg[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * bn->data[i];
                       if (pg[1])
                         for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i] * an->data[i];
                     });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_result(a.shape(), std::move(out), {&a},
                     [s](const std::vector<double>& g, std::vector<std::vector<double>*>& pg) {
                       if (pg[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * s;
                     });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {&a},
                     [an](const std::vector<double>& g, std::vector<std::vector<double>*>& pg) {
                       if (pg[0])
                         for (std::size_t i = 0; i < g.size(); ++i)
                           (*pg[0])[i] += 2.0 * an->data[i] * g[i];
                     });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(a.data()[i]);
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {&a},
                     [an](const std::vector<double>& g, std::vector<std::vector<double>*>& pg) {
                       if (pg[0])
                         for (std::size_t i = 0; i < g.size(); ++i)
                           (*pg[0])[i] += g[i] * gelu_derivative(an->data[i]);
                     });
}

Tensor sum(const Tensor& a) {
  const auto d = a.data();
  const double s = std::accumulate(d.begin(), d.end(), 0.0);
  return make_result(Shape{1}, {s}, {&a},
                     [](const std::vector<double>& g, std::vector<std::vector<double>*>& pg) {
                       if (pg[0])
                         for (auto& v : *pg[0]) v += g[0];
                     });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = CMapMat(a.data().data(), m, k) * CMapMat(b.data().data(), k, n);
  auto an = a.node();
  auto bn = b.node();
  return make_result(Shape{m, n}, std::move(out), {&a, &b},
                     [an, bn, m, k, n](const std::vector<double>& g,
                                       std::vector<std::vector<double>*>& pg) {
                       CMapMat G(g.data(), m, n);
                       if (pg[0])
                         MapMat(pg[0]->data(), m, k).noalias() += G * CMapMat(bn->data.data(), k, n).transpose();
                       if (pg[1])
                         MapMat(pg[1]->data(), k, n).noalias() += CMapMat(an->data.data(), m, k).transpose() * G;
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t b = x.dim(0), in = x.dim(1), out_w = w.dim(0);
  if (w.dim(1) != in) {
    throw DimensionError("linear: input width " + std::to_string(in) + " vs weight " +
                         shape_str(w.shape()));
  }
  if (bias.size() != out_w) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " vs weight " +
                         shape_str(w.shape()));
  }
  std::vector<double> out(b * out_w);
  MapMat Y(out.data(), b, out_w);
  Y.noalias() = CMapMat(x.data().data(), b, in) * CMapMat(w.data().data(), out_w, in).transpose();
  Y.rowwise() += CMapVec(bias.data().data(), out_w).transpose();
  auto xn = x.node();
  auto wn = w.node();
  return make_result(Shape{b, out_w}, std::move(out), {&x, &w, &bias},
                     [xn, wn, b, in, out_w](const std::vector<double>& g,
                                            std::vector<std::vector<double>*>& pg) {
                       CMapMat G(g.data(), b, out_w);
                       if (pg[0])
                         MapMat(pg[0]->data(), b, in).noalias() += G * CMapMat(wn->data.data(), out_w, in);
                       if (pg[1])
                         MapMat(pg[1]->data(), out_w, in).noalias() +=
                             G.transpose() * CMapMat(xn->data.data(), b, in);
                       if (pg[2]) MapVec(pg[2]->data(), out_w) += G.colwise().sum().transpose();
                     });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  const std::size_t rows = a.dim(0), p = a.dim(1), q = b.dim(1);
  if (b.dim(0) != rows) {
    throw DimensionError("concat_cols: row counts differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(rows * (p + q));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * p, p, out.data() + r * (p + q));
    std::copy_n(b.data().data() + r * q, q, out.data() + r * (p + q) + p);
  }
  return make_result(Shape{rows, p + q}, std::move(out), {&a, &b},
                     [rows, p, q](const std::vector<double>& g,
                                  std::vector<std::vector<double>*>& pg) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* src = g.data() + r * (p + q);
                         if (pg[0])
                           for (std::size_t j = 0; j < p; ++j) (*pg[0])[r * p + j] += src[j];
                         if (pg[1])
                           for (std::size_t j = 0; j < q; ++j) (*pg[1])[r * q + j] += src[p + j];
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {&a},
                     [](const std::vector<double>& g, std::vector<std::vector<double>*>& pg) {
                       if (pg[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                     });
}

Tensor scale_rows(const Tensor& a, std::span<const double> factors) {
  require_rank(a, 2, "scale_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (factors.size() != rows) {
    throw DimensionError("scale_rows: " + std::to_string(factors.size()) + " factors for " +
                         shape_str(a.shape()));
  }
  std::vector<double> f(factors.begin(), factors.end());
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a.data()[r * cols + c] * f[r];
  return make_result(a.shape(), std::move(out), {&a},
                     [f = std::move(f), cols](const std::vector<double>& g,
                                              std::vector<std::vector<double>*>& pg) {
                       if (!pg[0]) return;
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * f[i / cols];
                     });
}

}  // namespace ad

}  // namespace rfmia
