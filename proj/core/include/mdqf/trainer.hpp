#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdqf/dataset.hpp"
#include "mdqf/detector.hpp"
#include "mdqf/losses.hpp"
#include "mdqf/model.hpp"

namespace mdqf::train {

struct TrainConfig {
  long epochs = 1;
  long max_steps = 0;  // 0 means run out the epochs, otherwise stop after this many steps
  long batch_size = 2;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  // Linear ramp to lr over this many steps, then cosine decay to lr * lr_floor
  // by the final step. warmup 0 with floor 1.0 is a constant rate.
  long warmup_steps = 0;
  double lr_floor = 1.0;
  uint64_t seed = 0;
  LossWeights weights;
  std::string log_path;   // empty disables the JSONL step log
  std::string phase_tag;  // copied into every log record
};

struct TrainStats {
  long steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double wall_ms = 0.0;
};

// A frozen parameter changed during joint training.
class FreezeViolation : public std::runtime_error {
 public:
  explicit FreezeViolation(const std::string& what) : std::runtime_error(what) {}
};

// Whole-branch optimization on single-modality data; every branch parameter
// trains.
TrainStats train_separate(det::BranchDetector& branch,
                          const std::vector<data::SingleSample>& dataset,
                          const TrainConfig& config);

// Fused-forward optimization on paired data. Only decoder layers, prediction
// heads, and fusion adapters update; backbone, encoder, and query
// initializers are snapshotted and verified bitwise-unchanged afterward.
TrainStats train_joint(mdl::MdqfModel& model, const std::vector<data::PairedSample>& dataset,
                       const TrainConfig& config);

// Name-prefix rule backing the joint-phase freeze contract.
bool joint_trainable(const std::string& name);

// Per round: each branch trains separately on its unpaired set (fusion
// bypassed), then the composite trains jointly on the paired set. Returns the
// last joint phase's stats.
TrainStats separate_to_joint_loop(mdl::MdqfModel& model,
                                  const std::vector<data::SingleSample>& rgb_unpaired,
                                  const std::vector<data::SingleSample>& tir_unpaired,
                                  const std::vector<data::PairedSample>& paired, long rounds,
                                  const TrainConfig& config);

}  // namespace mdqf::train
