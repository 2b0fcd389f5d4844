#include "mdqf/ad.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace mdqf::ad {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

using detail::Node;

// Accumulate into a parent only when it participates in the graph.
void acc(Node& p, const Matrix& g) {
  if (p.requires_grad) p.ensure_grad() += g;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var make_var(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool needs_grad = false;
    for (const Var& p : parents) needs_grad = needs_grad || p.requires_grad();
    if (needs_grad) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (Var& p : parents) node->parents.push_back(p.node_);
      node->backprop = std::move(backprop);
    }
  }
  return Var(std::move(node));
}

Var constant(Matrix v) { return make_var(std::move(v), {}, nullptr); }

Var constant_scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var param(Tensor& t) {
  auto node = std::make_shared<detail::Node>();
  node->value = t.value;
  if (g_grad_enabled) {
    node->requires_grad = true;
    Tensor* tp = &t;
    node->backprop = [tp](Node& self) { tp->grad += self.grad; };
  }
  return Var(std::move(node));
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_var(a.value() + b.value(), {a, b}, [](Node& self) {
    acc(*self.parents[0], self.grad);
    acc(*self.parents[1], self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_var(a.value() - b.value(), {a, b}, [](Node& self) {
    acc(*self.parents[0], self.grad);
    acc(*self.parents[1], -self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  return make_var(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    acc(*self.parents[0], self.grad.cwiseProduct(self.parents[1]->value));
    acc(*self.parents[1], self.grad.cwiseProduct(self.parents[0]->value));
  });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  return make_var(a.value().cwiseQuotient(b.value()), {a, b}, [](Node& self) {
    const Matrix& bv = self.parents[1]->value;
    acc(*self.parents[0], self.grad.cwiseQuotient(bv));
    acc(*self.parents[1], -(self.grad.cwiseProduct(self.value).cwiseQuotient(bv)));
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  return make_var(a.value() * b.value(), {a, b}, [](Node& self) {
    acc(*self.parents[0], self.grad * self.parents[1]->value.transpose());
    acc(*self.parents[1], self.parents[0]->value.transpose() * self.grad);
  });
}

Var transpose(const Var& a) {
  return make_var(a.value().transpose(), {a},
                  [](Node& self) { acc(*self.parents[0], self.grad.transpose()); });
}

Var scale(const Var& a, double s) {
  return make_var(a.value() * s, {a},
                  [s](Node& self) { acc(*self.parents[0], self.grad * s); });
}

Var add_scalar(const Var& a, double s) {
  return make_var((a.value().array() + s).matrix(), {a},
                  [](Node& self) { acc(*self.parents[0], self.grad); });
}

Var neg(const Var& a) {
  return make_var(-a.value(), {a}, [](Node& self) { acc(*self.parents[0], -self.grad); });
}

Var pow_scalar(const Var& a, double p) {
  return make_var(a.value().array().pow(p).matrix(), {a}, [p](Node& self) {
    const Matrix d = (p * self.parents[0]->value.array().pow(p - 1.0)).matrix();
    acc(*self.parents[0], self.grad.cwiseProduct(d));
  });
}

Var add_rowvec(const Var& x, const Var& r) {
  if (r.rows() != 1 || r.cols() != x.cols()) throw std::invalid_argument("add_rowvec: bad shapes");
  return make_var(x.value().rowwise() + r.value().row(0), {x, r}, [](Node& self) {
    acc(*self.parents[0], self.grad);
    acc(*self.parents[1], self.grad.colwise().sum());
  });
}

Var mul_rowvec(const Var& x, const Var& r) {
  if (r.rows() != 1 || r.cols() != x.cols()) throw std::invalid_argument("mul_rowvec: bad shapes");
  Matrix out = (x.value().array().rowwise() * r.value().row(0).array()).matrix();
  return make_var(std::move(out), {x, r}, [](Node& self) {
    const Matrix& xv = self.parents[0]->value;
    const Matrix& rv = self.parents[1]->value;
    acc(*self.parents[0], (self.grad.array().rowwise() * rv.row(0).array()).matrix());
    acc(*self.parents[1], self.grad.cwiseProduct(xv).colwise().sum());
  });
}

Var add_colvec(const Var& x, const Var& c) {
  if (c.cols() != 1 || c.rows() != x.rows()) throw std::invalid_argument("add_colvec: bad shapes");
  return make_var(x.value().colwise() + c.value().col(0), {x, c}, [](Node& self) {
    acc(*self.parents[0], self.grad);
    acc(*self.parents[1], self.grad.rowwise().sum());
  });
}

Var mul_colvec(const Var& x, const Var& c) {
  if (c.cols() != 1 || c.rows() != x.rows()) throw std::invalid_argument("mul_colvec: bad shapes");
  Matrix out = (x.value().array().colwise() * c.value().col(0).array()).matrix();
  return make_var(std::move(out), {x, c}, [](Node& self) {
    const Matrix& xv = self.parents[0]->value;
    const Matrix& cv = self.parents[1]->value;
    acc(*self.parents[0], (self.grad.array().colwise() * cv.col(0).array()).matrix());
    acc(*self.parents[1], self.grad.cwiseProduct(xv).rowwise().sum());
  });
}

Var relu(const Var& a) {
  return make_var(a.value().cwiseMax(0.0), {a}, [](Node& self) {
    const Matrix mask = (self.parents[0]->value.array() > 0.0).cast<double>().matrix();
    acc(*self.parents[0], self.grad.cwiseProduct(mask));
  });
}

Var gelu(const Var& a) {
  Matrix out = a.value().unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  return make_var(std::move(out), {a}, [](Node& self) {
    const Matrix d = self.parents[0]->value.unaryExpr([](double x) {
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      return cdf + x * pdf;
    });
    acc(*self.parents[0], self.grad.cwiseProduct(d));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  return make_var(std::move(out), {a}, [](Node& self) {
    const Matrix d = (self.value.array() * (1.0 - self.value.array())).matrix();
    acc(*self.parents[0], self.grad.cwiseProduct(d));
  });
}

Var softplus(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  return make_var(std::move(out), {a}, [](Node& self) {
    const Matrix d = self.parents[0]->value.unaryExpr([](double x) { return stable_sigmoid(x); });
    acc(*self.parents[0], self.grad.cwiseProduct(d));
  });
}

Var abs(const Var& a) {
  return make_var(a.value().cwiseAbs(), {a}, [](Node& self) {
    const Matrix s = self.parents[0]->value.unaryExpr(
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    acc(*self.parents[0], self.grad.cwiseProduct(s));
  });
}

Var log(const Var& a) {
  return make_var(a.value().array().log().matrix(), {a}, [](Node& self) {
    acc(*self.parents[0], self.grad.cwiseQuotient(self.parents[0]->value));
  });
}

Var exp(const Var& a) {
  return make_var(a.value().array().exp().matrix(), {a}, [](Node& self) {
    acc(*self.parents[0], self.grad.cwiseProduct(self.value));
  });
}

Var max_elem(const Var& a, const Var& b) {
  check_same_shape(a, b, "max_elem");
  return make_var(a.value().cwiseMax(b.value()), {a, b}, [](Node& self) {
    const Matrix mask =
        (self.parents[0]->value.array() >= self.parents[1]->value.array()).cast<double>().matrix();
    acc(*self.parents[0], self.grad.cwiseProduct(mask));
    acc(*self.parents[1], self.grad.cwiseProduct((1.0 - mask.array()).matrix()));
  });
}

Var min_elem(const Var& a, const Var& b) {
  check_same_shape(a, b, "min_elem");
  return make_var(a.value().cwiseMin(b.value()), {a, b}, [](Node& self) {
    const Matrix mask =
        (self.parents[0]->value.array() <= self.parents[1]->value.array()).cast<double>().matrix();
    acc(*self.parents[0], self.grad.cwiseProduct(mask));
    acc(*self.parents[1], self.grad.cwiseProduct((1.0 - mask.array()).matrix()));
  });
}

Var logit_clamped(const Var& a, double eps) {
  Matrix out = a.value().unaryExpr([eps](double x) {
    const double p = std::min(std::max(x, eps), 1.0 - eps);
    return std::log(p / (1.0 - p));
  });
  return make_var(std::move(out), {a}, [eps](Node& self) {
    const Matrix d = self.parents[0]->value.unaryExpr([eps](double x) {
      if (x <= eps || x >= 1.0 - eps) return 0.0;
      return 1.0 / (x * (1.0 - x));
    });
    acc(*self.parents[0], self.grad.cwiseProduct(d));
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (long i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return make_var(std::move(out), {a}, [](Node& self) {
    const Matrix gy = self.grad.cwiseProduct(self.value);
    const Vector rs = gy.rowwise().sum();
    Matrix dx = gy - (self.value.array().colwise() * rs.array()).matrix();
    acc(*self.parents[0], dx);
  });
}

Var rowwise_sum(const Var& a) {
  return make_var(a.value().rowwise().sum(), {a}, [](Node& self) {
    const long n = self.parents[0]->value.cols();
    acc(*self.parents[0], self.grad.col(0).replicate(1, n));
  });
}

Var rowwise_mean(const Var& a) {
  const double n = static_cast<double>(a.cols());
  return make_var(a.value().rowwise().mean(), {a}, [n](Node& self) {
    const long c = self.parents[0]->value.cols();
    acc(*self.parents[0], (self.grad.col(0) / n).replicate(1, c));
  });
}

Var sum_all(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_var(std::move(out), {a}, [](Node& self) {
    const Matrix& pv = self.parents[0]->value;
    acc(*self.parents[0], Matrix::Constant(pv.rows(), pv.cols(), self.grad(0, 0)));
  });
}

Var mean_all(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  const double n = static_cast<double>(a.size());
  return make_var(std::move(out), {a}, [n](Node& self) {
    const Matrix& pv = self.parents[0]->value;
    acc(*self.parents[0], Matrix::Constant(pv.rows(), pv.cols(), self.grad(0, 0) / n));
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  long rows = 0;
  const long cols = parts[0].cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  long r = 0;
  std::vector<long> offsets;
  for (const Var& p : parts) {
    offsets.push_back(r);
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return make_var(std::move(out), parts, [offsets](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      acc(p, self.grad.middleRows(offsets[i], p.value.rows()));
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  long cols = 0;
  const long rows = parts[0].rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  long c = 0;
  std::vector<long> offsets;
  for (const Var& p : parts) {
    offsets.push_back(c);
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return make_var(std::move(out), parts, [offsets](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      acc(p, self.grad.middleCols(offsets[i], p.value.cols()));
    }
  });
}

Var slice_rows(const Var& a, long r0, long count) {
  if (r0 < 0 || r0 + count > a.rows()) throw std::out_of_range("slice_rows: out of range");
  return make_var(a.value().middleRows(r0, count), {a}, [r0, count](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad().middleRows(r0, count) += self.grad;
  });
}

Var slice_cols(const Var& a, long c0, long count) {
  if (c0 < 0 || c0 + count > a.cols()) throw std::out_of_range("slice_cols: out of range");
  return make_var(a.value().middleCols(c0, count), {a}, [c0, count](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad().middleCols(c0, count) += self.grad;
  });
}

Var gather_rows(const Var& a, std::vector<int> idx) {
  Matrix out(static_cast<long>(idx.size()), a.cols());
  for (size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= a.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<long>(j)) = a.value().row(idx[j]);
  }
  return make_var(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix& g = p.ensure_grad();
    for (size_t j = 0; j < idx.size(); ++j) g.row(idx[j]) += self.grad.row(static_cast<long>(j));
  });
}

Var detach(const Var& a) { return constant(a.value()); }

void backward(const Var& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (root.size() != 1) throw std::invalid_argument("backward: root must be scalar");
  detail::Node* r = root.node_.get();
  if (!r->requires_grad) return;

  // Reverse post-order over the requires-grad subgraph = valid execution
  // order (every consumer runs before the node it feeds).
  std::vector<detail::Node*> order;
  std::unordered_map<detail::Node*, bool> visited;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  visited[r] = true;
  stack.push_back({r, 0});
  while (!stack.empty()) {
    auto& [n, ci] = stack.back();
    if (ci < n->parents.size()) {
      detail::Node* p = n->parents[ci].get();
      ++ci;
      if (p->requires_grad && !visited[p]) {
        visited[p] = true;
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  r->ensure_grad()(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

}  // namespace mdqf::ad
