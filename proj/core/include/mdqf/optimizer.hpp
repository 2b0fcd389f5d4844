#pragma once

#include <string>
#include <vector>

#include "mdqf/ad.hpp"

namespace mdqf::train {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay. Update order is registration order, which
// keeps runs bitwise reproducible for a fixed registration sequence.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void add_param(ad::Tensor& t);
  // ParamVisitor-compatible registration.
  void add_param(const std::string& name, ad::Tensor& t) { add_param(t); }

  long num_params() const { return static_cast<long>(states_.size()); }
  const AdamWConfig& config() const { return cfg_; }
  // Schedulers adjust the rate between steps; moments are unaffected.
  void set_lr(double lr) { cfg_.lr = lr; }

  void step();
  void zero_grad();

 private:
  struct State {
    ad::Tensor* tensor;
    ad::Matrix m;
    ad::Matrix v;
  };

  AdamWConfig cfg_;
  long step_count_ = 0;
  std::vector<State> states_;
};

}  // namespace mdqf::train
