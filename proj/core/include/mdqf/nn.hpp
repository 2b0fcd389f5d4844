#pragma once

#include <functional>
#include <string>

#include "mdqf/ad.hpp"
#include "mdqf/rng.hpp"

// Small layer library over the autodiff tape. Layers own their Tensors and
// expose visit() so optimizers and checkpoints can walk parameters by
// hierarchical name without reflection.

namespace mdqf::nn {

using ad::Matrix;
using ad::Tensor;
using ad::Var;

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

Matrix xavier_uniform(Rng& rng, long in, long out);

// y = x W + b with x as rows of samples; W is (in, out), b is (1, out).
struct Linear {
  Tensor w;
  Tensor b;

  Linear() = default;
  Linear(long in, long out, Rng& rng);

  Var forward(const Var& x);
  void zero_init();  // exact identity-delta start for residual layers
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(long dim);

  Var forward(const Var& x);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// fc2(gelu(fc1(x)))
struct Mlp {
  Linear fc1;
  Linear fc2;

  Mlp() = default;
  Mlp(long in, long hidden, long out, Rng& rng);

  Var forward(const Var& x);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Standard scaled dot-product attention with per-head column slices.
struct MultiheadAttention {
  Linear q, k, v, o;
  long heads = 1;

  MultiheadAttention() = default;
  MultiheadAttention(long dim, long heads, Rng& rng);

  // query: (Nq, d); key/value: (Nk, d) -> (Nq, d)
  Var forward(const Var& query, const Var& key, const Var& value);
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Fixed sin/cos features for a grid_h x grid_w token grid; rows are tokens in
// row-major order, first half of dim encodes y, second half x.
Matrix sinusoidal_2d(long grid_h, long grid_w, long dim);

// Fixed sin/cos features of normalized (cx, cy, w, h); dim/4 channels per
// coordinate. Requires dim divisible by 8.
Matrix box_position_encoding(const Matrix& boxes, long dim);

// Differentiable form of the same encoding as one fused tape node, so box
// gradients flow through positional conditioning.
Var box_position_encoding(const Var& boxes, long dim);

}  // namespace mdqf::nn
