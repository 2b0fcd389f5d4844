#include "mdqf/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mdqf::nn {

Matrix xavier_uniform(Rng& rng, long in, long out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix m(in, out);
  for (long j = 0; j < out; ++j)
    for (long i = 0; i < in; ++i) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

Linear::Linear(long in, long out, Rng& rng)
    : w(xavier_uniform(rng, in, out)), b(Matrix::Zero(1, out)) {}

Var Linear::forward(const Var& x) {
  return ad::add_rowvec(ad::matmul(x, ad::param(w)), ad::param(b));
}

void Linear::zero_init() {
  w.value.setZero();
  b.value.setZero();
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".w", w);
  fn(prefix + ".b", b);
}

LayerNorm::LayerNorm(long dim)
    : gamma(Matrix::Ones(1, dim)), beta(Matrix::Zero(1, dim)) {}

Var LayerNorm::forward(const Var& x) {
  Var mean = ad::rowwise_mean(x);
  Var centered = ad::add_colvec(x, ad::neg(mean));
  Var var = ad::rowwise_mean(ad::mul(centered, centered));
  Var inv_std = ad::pow_scalar(ad::add_scalar(var, eps), -0.5);
  Var normed = ad::mul_colvec(centered, inv_std);
  return ad::add_rowvec(ad::mul_rowvec(normed, ad::param(gamma)), ad::param(beta));
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

Mlp::Mlp(long in, long hidden, long out, Rng& rng)
    : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

Var Mlp::forward(const Var& x) { return fc2.forward(ad::gelu(fc1.forward(x))); }

void Mlp::visit(const std::string& prefix, const ParamVisitor& fn) {
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

MultiheadAttention::MultiheadAttention(long dim, long heads_, Rng& rng)
    : q(dim, dim, rng), k(dim, dim, rng), v(dim, dim, rng), o(dim, dim, rng), heads(heads_) {
  if (dim % heads_ != 0) throw std::invalid_argument("attention: dim not divisible by heads");
}

Var MultiheadAttention::forward(const Var& query, const Var& key, const Var& value) {
  const long dim = q.w.value.rows();
  const long hd = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  Var qp = q.forward(query);
  Var kp = k.forward(key);
  Var vp = v.forward(value);

  std::vector<Var> outs;
  outs.reserve(heads);
  for (long h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(qp, h * hd, hd);
    Var kh = ad::slice_cols(kp, h * hd, hd);
    Var vh = ad::slice_cols(vp, h * hd, hd);
    Var attn = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
    outs.push_back(ad::matmul(attn, vh));
  }
  return o.forward(ad::concat_cols(outs));
}

void MultiheadAttention::visit(const std::string& prefix, const ParamVisitor& fn) {
  q.visit(prefix + ".q", fn);
  k.visit(prefix + ".k", fn);
  v.visit(prefix + ".v", fn);
  o.visit(prefix + ".o", fn);
}

namespace {

// Writes interleaved sin/cos of value * frequency ladder into row r,
// columns [c0, c0 + span).
void write_sincos(Matrix& out, long r, long c0, long span, double value) {
  const long pairs = span / 2;
  for (long p = 0; p < pairs; ++p) {
    const double freq =
        std::pow(10000.0, -2.0 * static_cast<double>(p) / static_cast<double>(span));
    const double angle = 2.0 * M_PI * value * freq;
    out(r, c0 + 2 * p) = std::sin(angle);
    out(r, c0 + 2 * p + 1) = std::cos(angle);
  }
}

}  // namespace

Matrix sinusoidal_2d(long grid_h, long grid_w, long dim) {
  if (dim % 4 != 0) throw std::invalid_argument("sinusoidal_2d: dim must be divisible by 4");
  Matrix out(grid_h * grid_w, dim);
  const long half = dim / 2;
  for (long y = 0; y < grid_h; ++y) {
    const double ny = (static_cast<double>(y) + 0.5) / static_cast<double>(grid_h);
    for (long x = 0; x < grid_w; ++x) {
      const double nx = (static_cast<double>(x) + 0.5) / static_cast<double>(grid_w);
      const long r = y * grid_w + x;
      write_sincos(out, r, 0, half, ny);
      write_sincos(out, r, half, half, nx);
    }
  }
  return out;
}

Matrix box_position_encoding(const Matrix& boxes, long dim) {
  if (dim % 8 != 0)
    throw std::invalid_argument("box_position_encoding: dim must be divisible by 8");
  if (boxes.cols() != 4) throw std::invalid_argument("box_position_encoding: boxes must be (n,4)");
  const long span = dim / 4;
  Matrix out(boxes.rows(), dim);
  for (long r = 0; r < boxes.rows(); ++r)
    for (long c = 0; c < 4; ++c) write_sincos(out, r, c * span, span, boxes(r, c));
  return out;
}

Var box_position_encoding(const Var& boxes, long dim) {
  Matrix value = box_position_encoding(boxes.value(), dim);
  const long span = dim / 4;
  return ad::make_var(std::move(value), {boxes}, [span](ad::detail::Node& self) {
    ad::detail::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix& g = p.ensure_grad();
    const long pairs = span / 2;
    for (long r = 0; r < p.value.rows(); ++r) {
      for (long c = 0; c < 4; ++c) {
        double acc = 0.0;
        for (long pr = 0; pr < pairs; ++pr) {
          const double freq =
              std::pow(10000.0, -2.0 * static_cast<double>(pr) / static_cast<double>(span));
          const double dangle = 2.0 * M_PI * freq;
          const long cs = c * span + 2 * pr;
          // d sin = cos * dangle, d cos = -sin * dangle; reuse stored values.
          acc += dangle * (self.grad(r, cs) * self.value(r, cs + 1) -
                           self.grad(r, cs + 1) * self.value(r, cs));
        }
        g(r, c) += acc;
      }
    }
  });
}

}  // namespace mdqf::nn
