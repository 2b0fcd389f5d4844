#include <cmath>
#include <cstring>

#include "doctest.h"
#include "mdqf/optimizer.hpp"
#include "mdqf/rng.hpp"
#include "test_util.hpp"

using namespace mdqf;
using train::AdamW;
using train::AdamWConfig;

TEST_SUITE("optimizer") {
  TEST_CASE("quadratic bowl converges to its minimum") {
    Rng rng(3);
    ad::Tensor x{testutil::rand_mat(rng, 2, 3, -2.0, 2.0)};
    ad::Matrix target = testutil::rand_mat(rng, 2, 3, -1.0, 1.0);

    AdamW opt({0.05, 0.9, 0.999, 1e-8, 0.0});
    opt.add_param(x);
    for (int step = 0; step < 800; ++step) {
      ad::Var diff = ad::sub(ad::param(x), ad::constant(target));
      ad::backward(ad::sum_all(ad::mul(diff, diff)));
      opt.step();
      opt.zero_grad();
    }
    CHECK((x.value - target).cwiseAbs().maxCoeff() < 1e-4);
  }

  TEST_CASE("first step reproduces the closed-form update") {
    ad::Tensor p{ad::Matrix::Constant(1, 1, 2.0)};
    p.zero_grad();
    p.grad(0, 0) = 0.3;
    AdamWConfig cfg{0.01, 0.9, 0.999, 1e-8, 0.1};
    AdamW opt(cfg);
    opt.add_param(p);
    opt.step();
    // After bias correction the first-step moment estimates equal g and g^2.
    const double expected =
        2.0 - cfg.lr * (0.3 / (std::sqrt(0.3 * 0.3) + cfg.eps) + cfg.weight_decay * 2.0);
    CHECK(p.value(0, 0) == doctest::Approx(expected).epsilon(1e-15));
  }

  TEST_CASE("weight decay is decoupled from the gradient") {
    ad::Tensor p{ad::Matrix::Constant(2, 2, 4.0)};
    p.zero_grad();
    AdamW opt({0.01, 0.9, 0.999, 1e-8, 0.1});
    opt.add_param(p);
    opt.step();
    // Zero gradient: only the decay term moves the value.
    CHECK(p.value(0, 0) == doctest::Approx(4.0 * (1.0 - 0.01 * 0.1)).epsilon(1e-15));
    CHECK(p.value(1, 1) == doctest::Approx(4.0 * (1.0 - 0.01 * 0.1)).epsilon(1e-15));
  }

  TEST_CASE("duplicate registration rejected") {
    ad::Tensor p{ad::Matrix::Zero(1, 1)};
    AdamW opt;
    opt.add_param(p);
    CHECK_THROWS_AS(opt.add_param(p), std::invalid_argument);
    CHECK(opt.num_params() == 1);
  }

  TEST_CASE("identical runs stay bitwise identical") {
    auto run = [](ad::Matrix& out) {
      Rng rng(91);
      ad::Tensor x{testutil::rand_mat(rng, 3, 3, -1.0, 1.0)};
      ad::Matrix target = testutil::rand_mat(rng, 3, 3, -1.0, 1.0);
      AdamW opt({0.02, 0.9, 0.999, 1e-8, 0.05});
      opt.add_param(x);
      for (int step = 0; step < 50; ++step) {
        ad::Var diff = ad::sub(ad::param(x), ad::constant(target));
        ad::backward(ad::mean_all(ad::mul(diff, diff)));
        opt.step();
        opt.zero_grad();
      }
      out = x.value;
    };
    ad::Matrix a, b;
    run(a);
    run(b);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0);
  }

  TEST_CASE("zero_grad clears every registered gradient") {
    Rng rng(5);
    ad::Tensor a{testutil::rand_mat(rng, 2, 2, -1.0, 1.0)};
    ad::Tensor b{testutil::rand_mat(rng, 1, 4, -1.0, 1.0)};
    AdamW opt;
    opt.add_param(a);
    opt.add_param(b);
    ad::backward(ad::add(ad::sum_all(ad::param(a)), ad::sum_all(ad::param(b))));
    CHECK(a.grad.cwiseAbs().maxCoeff() > 0.0);
    opt.zero_grad();
    CHECK(a.grad.cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.grad.cwiseAbs().maxCoeff() == 0.0);
  }
}
