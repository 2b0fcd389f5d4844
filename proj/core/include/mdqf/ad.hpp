#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

// Reverse-mode automatic differentiation over dense float64 matrices.
// Graphs are built per forward pass and discarded after backward(); trainable
// state lives in Tensor objects that outlive any graph referencing them.
// All operations are single-threaded and evaluation order is fixed, so
// repeated runs are bitwise reproducible.

namespace mdqf::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Trainable parameter storage: value plus accumulated gradient.
struct Tensor {
  Matrix value;
  Matrix grad;

  Tensor() = default;
  explicit Tensor(Matrix v) : value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
  long size() const { return value.size(); }
};

namespace detail {
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // scatters this->grad into parents

  Matrix& ensure_grad() {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
};
}  // namespace detail

// While alive, newly created nodes carry no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

class Var {
 public:
  Var() = default;

  const Matrix& value() const { return node_->value; }
  long rows() const { return node_->value.rows(); }
  long cols() const { return node_->value.cols(); }
  long size() const { return node_->value.size(); }
  double scalar() const { return node_->value(0, 0); }
  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient of the last backward() that reached this node.
  const Matrix& grad() const { return node_->grad; }

 private:
  explicit Var(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Var make_var(Matrix value, std::vector<Var> parents,
                      std::function<void(detail::Node&)> backprop);
  friend Var param(Tensor& t);
  friend void backward(const Var& root);
};

// Graph-node factory used by all ops (exposed so layers can add fused ops).
Var make_var(Matrix value, std::vector<Var> parents,
             std::function<void(detail::Node&)> backprop);

Var constant(Matrix v);
Var constant_scalar(double v);

// Leaf bound to parameter storage; backward accumulates into t.grad.
// The Tensor must outlive every graph referencing it.
Var param(Tensor& t);

// --- arithmetic -------------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var div(const Var& a, const Var& b);  // elementwise
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var pow_scalar(const Var& a, double p);  // elementwise a^p, a > 0

// --- broadcasts -------------------------------------------------------------
Var add_rowvec(const Var& x, const Var& r);  // (m,n) + (1,n)
Var mul_rowvec(const Var& x, const Var& r);
Var add_colvec(const Var& x, const Var& c);  // (m,n) + (m,1)
Var mul_colvec(const Var& x, const Var& c);

// --- nonlinearities ----------------------------------------------------------
Var relu(const Var& a);
Var gelu(const Var& a);  // exact erf form
Var sigmoid(const Var& a);
Var softplus(const Var& a);  // log(1 + e^x), numerically stable
Var abs(const Var& a);
Var log(const Var& a);
Var exp(const Var& a);
Var max_elem(const Var& a, const Var& b);  // ties route gradient to a
Var min_elem(const Var& a, const Var& b);
// log(p / (1-p)) with p clamped to [eps, 1-eps]; zero gradient outside.
Var logit_clamped(const Var& a, double eps = 1e-6);

// --- reductions and shape ----------------------------------------------------
Var softmax_rows(const Var& a);
Var rowwise_sum(const Var& a);   // (m,1)
Var rowwise_mean(const Var& a);  // (m,1)
Var sum_all(const Var& a);       // (1,1)
Var mean_all(const Var& a);      // (1,1)
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, long r0, long count);
Var slice_cols(const Var& a, long c0, long count);
Var gather_rows(const Var& a, std::vector<int> idx);
Var detach(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// Accumulates gradients from a scalar (1x1) root into every reachable
// parameter Tensor.
void backward(const Var& root);

}  // namespace mdqf::ad
