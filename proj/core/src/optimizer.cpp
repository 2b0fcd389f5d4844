#include "mdqf/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace mdqf::train {

void AdamW::add_param(ad::Tensor& t) {
  for (const State& s : states_) {
    if (s.tensor == &t) throw std::invalid_argument("AdamW: parameter registered twice");
  }
  State s;
  s.tensor = &t;
  s.m = ad::Matrix::Zero(t.value.rows(), t.value.cols());
  s.v = ad::Matrix::Zero(t.value.rows(), t.value.cols());
  states_.push_back(std::move(s));
}

void AdamW::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (State& s : states_) {
    const ad::Matrix& g = s.tensor->grad;
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * g;
    s.v = (cfg_.beta2 * s.v.array() + (1.0 - cfg_.beta2) * g.array().square()).matrix();
    ad::Matrix m_hat = s.m / bc1;
    ad::Matrix v_hat = s.v / bc2;
    ad::Matrix update =
        (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps) +
         cfg_.weight_decay * s.tensor->value.array())
            .matrix();
    s.tensor->value -= cfg_.lr * update;
  }
}

void AdamW::zero_grad() {
  for (State& s : states_) s.tensor->zero_grad();
}

}  // namespace mdqf::train
