#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mdqf/nn.hpp"
#include "test_util.hpp"

using namespace mdqf;
using ad::Matrix;
using ad::Tensor;
using ad::Var;
using testutil::fd_check;
using testutil::rand_mat;

TEST_SUITE("nn") {

TEST_CASE("linear gradients") {
  Rng rng(41);
  nn::Linear lin(5, 3, rng);
  Tensor x(rand_mat(rng, 4, 5, -1.0, 1.0));
  const Matrix w = rand_mat(rng, 4, 3, -1.0, 1.0);
  fd_check([&] { return ad::sum_all(ad::mul(lin.forward(ad::param(x)), ad::constant(w))); },
           {&x, &lin.w, &lin.b});
}

TEST_CASE("layernorm normalizes rows and differentiates") {
  Rng rng(42);
  nn::LayerNorm ln(6);
  Tensor x(rand_mat(rng, 3, 6, -2.0, 2.0));
  {
    ad::NoGradGuard ng;
    Var y = ln.forward(ad::param(x));
    for (long i = 0; i < y.rows(); ++i) {
      CHECK(y.value().row(i).mean() == doctest::Approx(0.0).epsilon(1e-10));
      const double var = y.value().row(i).array().square().mean();
      CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shifts it slightly
    }
  }
  const Matrix w = rand_mat(rng, 3, 6, -1.0, 1.0);
  fd_check([&] { return ad::sum_all(ad::mul(ln.forward(ad::param(x)), ad::constant(w))); },
           {&x, &ln.gamma, &ln.beta});
}

TEST_CASE("mlp gradients") {
  Rng rng(43);
  nn::Mlp mlp(4, 8, 3, rng);
  Tensor x(rand_mat(rng, 2, 4, -1.0, 1.0));
  const Matrix w = rand_mat(rng, 2, 3, -1.0, 1.0);
  fd_check([&] { return ad::sum_all(ad::mul(mlp.forward(ad::param(x)), ad::constant(w))); },
           {&x, &mlp.fc1.w, &mlp.fc1.b, &mlp.fc2.w, &mlp.fc2.b});
}

TEST_CASE("attention shape and gradients") {
  Rng rng(44);
  nn::MultiheadAttention mha(8, 2, rng);
  Tensor q(rand_mat(rng, 3, 8, -1.0, 1.0));
  Tensor kv(rand_mat(rng, 5, 8, -1.0, 1.0));
  {
    ad::NoGradGuard ng;
    Var out = mha.forward(ad::param(q), ad::param(kv), ad::param(kv));
    CHECK(out.rows() == 3);
    CHECK(out.cols() == 8);
  }
  const Matrix w = rand_mat(rng, 3, 8, -1.0, 1.0);
  fd_check(
      [&] {
        Var kvv = ad::param(kv);
        return ad::sum_all(ad::mul(mha.forward(ad::param(q), kvv, kvv), ad::constant(w)));
      },
      {&q, &kv, &mha.q.w, &mha.k.w, &mha.v.w, &mha.o.w, &mha.o.b});
}

TEST_CASE("self attention is permutation equivariant") {
  Rng rng(45);
  nn::MultiheadAttention mha(8, 2, rng);
  Matrix x = rand_mat(rng, 5, 8, -1.0, 1.0);
  std::vector<int> perm{3, 0, 4, 1, 2};
  Matrix xp(5, 8);
  for (int i = 0; i < 5; ++i) xp.row(i) = x.row(perm[i]);

  ad::NoGradGuard ng;
  Var a = ad::constant(x);
  Var b = ad::constant(xp);
  Matrix ya = mha.forward(a, a, a).value();
  Matrix yb = mha.forward(b, b, b).value();
  for (int i = 0; i < 5; ++i)
    CHECK((yb.row(i) - ya.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("grid encoding shape range and determinism") {
  Matrix a = nn::sinusoidal_2d(4, 6, 16);
  Matrix b = nn::sinusoidal_2d(4, 6, 16);
  CHECK(a.rows() == 24);
  CHECK(a.cols() == 16);
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
  // Distinct cells get distinct encodings.
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.rows(); ++j)
      CHECK((a.row(i) - a.row(j)).cwiseAbs().maxCoeff() > 1e-9);
  CHECK_THROWS(nn::sinusoidal_2d(4, 4, 10));
}

TEST_CASE("box encoding shape and sensitivity") {
  Rng rng(46);
  Matrix boxes = rand_mat(rng, 7, 4, 0.0, 1.0);
  Matrix e = nn::box_position_encoding(boxes, 16);
  CHECK(e.rows() == 7);
  CHECK(e.cols() == 16);
  Matrix shifted = boxes;
  shifted(0, 0) += 0.05;
  Matrix e2 = nn::box_position_encoding(shifted, 16);
  CHECK((e2.row(0) - e.row(0)).cwiseAbs().maxCoeff() > 1e-6);
  CHECK((e2.row(1) - e.row(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS(nn::box_position_encoding(boxes, 12));
  CHECK_THROWS(nn::box_position_encoding(Matrix::Zero(3, 5), 16));
}

TEST_CASE("differentiable box encoding matches values and finite differences") {
  Rng rng(47);
  Tensor boxes(rand_mat(rng, 5, 4, 0.1, 0.9));
  {
    ad::NoGradGuard ng;
    Var e = nn::box_position_encoding(ad::param(boxes), 16);
    CHECK((e.value() - nn::box_position_encoding(boxes.value, 16)).cwiseAbs().maxCoeff() == 0.0);
  }
  const Matrix w = rand_mat(rng, 5, 16, -1.0, 1.0);
  fd_check(
      [&] {
        return ad::sum_all(
            ad::mul(nn::box_position_encoding(ad::param(boxes), 16), ad::constant(w)));
      },
      {&boxes});
}

}  // TEST_SUITE
