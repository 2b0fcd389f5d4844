#include "mdqf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

#include "mdqf/optimizer.hpp"
#include "mdqf/rng.hpp"

namespace mdqf::train {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct StepLogger {
  std::ofstream out;
  std::string phase;

  StepLogger(const std::string& path, std::string tag) : phase(std::move(tag)) {
    if (!path.empty()) out.open(path, std::ios::app);
  }

  void record(long step, double loss, const LossComponents& c, double wall_ms) {
    if (!out.is_open()) return;
    nlohmann::json j{{"phase", phase},   {"step", step}, {"loss", loss},
                     {"cls", c.cls},     {"iou", c.iou}, {"l1", c.l1},
                     {"wall_ms", wall_ms}};
    out << j.dump() << "\n";
  }
};

// Step-indexed rate for warmup + cosine decay; returns config.lr unchanged
// when scheduling is disabled so default runs keep their exact float path.
double scheduled_lr(const TrainConfig& config, long step, long total_steps) {
  if (config.warmup_steps <= 0 && config.lr_floor >= 1.0) return config.lr;
  if (config.warmup_steps > 0 && step <= config.warmup_steps) {
    return config.lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  }
  if (config.lr_floor >= 1.0) return config.lr;
  const long span = std::max(1L, total_steps - config.warmup_steps);
  const double progress =
      std::min(1.0, static_cast<double>(step - config.warmup_steps) / static_cast<double>(span));
  const double shape = 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
  return config.lr * (config.lr_floor + (1.0 - config.lr_floor) * shape);
}

std::vector<std::vector<size_t>> epoch_batches(size_t n, long batch_size, mdqf::Rng& epoch_rng) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  epoch_rng.shuffle(order);
  std::vector<std::vector<size_t>> batches;
  for (size_t i = 0; i < n; i += static_cast<size_t>(batch_size)) {
    size_t end = std::min(n, i + static_cast<size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<long>(i),
                         order.begin() + static_cast<long>(end));
  }
  return batches;
}

// Runs the shared epoch/batch/step loop; forward maps a sample index to its
// StageLoss on a fresh tape.
template <typename Forward>
TrainStats run_loop(size_t dataset_size, const TrainConfig& config, AdamW& opt, Forward forward) {
  TrainStats stats;
  mdqf::Rng base(config.seed);
  const auto t0 = Clock::now();
  StepLogger log(config.log_path, config.phase_tag);

  const long batches_per_epoch = static_cast<long>(
      (dataset_size + static_cast<size_t>(config.batch_size) - 1) /
      static_cast<size_t>(config.batch_size));
  const long total_steps =
      config.max_steps > 0 ? config.max_steps : config.epochs * batches_per_epoch;

  for (long epoch = 0; epoch < config.epochs; ++epoch) {
    mdqf::Rng epoch_rng = base.derive(0x45504F43ULL + static_cast<uint64_t>(epoch));
    for (const std::vector<size_t>& batch : epoch_batches(dataset_size, config.batch_size, epoch_rng)) {
      ad::Var total;
      LossComponents comps;
      for (size_t idx : batch) {
        StageLoss l = forward(idx);
        total = total.defined() ? ad::add(total, l.total) : l.total;
        comps += l.components;
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      total = ad::scale(total, inv);
      comps.cls *= inv;
      comps.iou *= inv;
      comps.l1 *= inv;

      ad::backward(total);
      opt.set_lr(scheduled_lr(config, stats.steps + 1, total_steps));
      opt.step();
      opt.zero_grad();

      const double loss = total.value()(0, 0);
      ++stats.steps;
      if (stats.steps == 1) stats.initial_loss = loss;
      stats.final_loss = loss;
      log.record(stats.steps, loss, comps, ms_since(t0));
      if (config.max_steps > 0 && stats.steps >= config.max_steps) {
        stats.wall_ms = ms_since(t0);
        return stats;
      }
    }
  }
  stats.wall_ms = ms_since(t0);
  return stats;
}

uint64_t phase_seed(uint64_t seed, long round, long phase) {
  return mdqf::splitmix64(seed ^ mdqf::splitmix64(static_cast<uint64_t>(round * 4 + phase + 1)));
}

}  // namespace

TrainStats train_separate(det::BranchDetector& branch,
                          const std::vector<data::SingleSample>& dataset,
                          const TrainConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("train_separate: empty dataset");
  if (config.epochs < 1 || config.lr <= 0.0 || config.batch_size < 1) {
    throw std::invalid_argument("train_separate: bad config");
  }

  AdamW opt({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  branch.visit_params([&](const std::string&, ad::Tensor& t) { opt.add_param(t); });

  const long stages = branch.config().stages;
  return run_loop(dataset.size(), config, opt, [&](size_t idx) {
    const data::SingleSample& s = dataset[idx];
    return branch_loss(branch.forward_single(s.image), s.gts, config.weights, stages);
  });
}

bool joint_trainable(const std::string& name) {
  return name.find(".decoder.") != std::string::npos ||
         name.find(".heads.") != std::string::npos || name.rfind("fusion.", 0) == 0;
}

TrainStats train_joint(mdl::MdqfModel& model, const std::vector<data::PairedSample>& dataset,
                       const TrainConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("train_joint: empty dataset");
  if (config.epochs < 1 || config.lr <= 0.0 || config.batch_size < 1) {
    throw std::invalid_argument("train_joint: bad config");
  }

  AdamW opt({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  struct Frozen {
    std::string name;
    const ad::Tensor* tensor;
    ad::Matrix snapshot;
  };
  std::vector<Frozen> frozen;
  model.visit_params([&](const std::string& name, ad::Tensor& t) {
    if (joint_trainable(name)) {
      opt.add_param(t);
    } else {
      frozen.push_back({name, &t, t.value});
    }
  });

  const long stages = model.config().detector.stages;
  TrainStats stats = run_loop(dataset.size(), config, opt, [&](size_t idx) {
    const data::PairedSample& s = dataset[idx];
    mdl::FusedForward f = model.forward_fused(s.rgb, s.tir, true);
    return joint_loss(f, data::ground_truth(s), config.weights, stages);
  });

  for (const Frozen& f : frozen) {
    const ad::Matrix& now = f.tensor->value;
    const bool same = now.rows() == f.snapshot.rows() && now.cols() == f.snapshot.cols() &&
                      std::memcmp(now.data(), f.snapshot.data(),
                                  sizeof(double) * static_cast<size_t>(now.size())) == 0;
    if (!same) throw FreezeViolation("train_joint: frozen parameter changed: " + f.name);
  }
  return stats;
}

TrainStats separate_to_joint_loop(mdl::MdqfModel& model,
                                  const std::vector<data::SingleSample>& rgb_unpaired,
                                  const std::vector<data::SingleSample>& tir_unpaired,
                                  const std::vector<data::PairedSample>& paired, long rounds,
                                  const TrainConfig& config) {
  if (rounds < 1) throw std::invalid_argument("separate_to_joint_loop: rounds must be >= 1");

  TrainStats last_joint;
  for (long r = 0; r < rounds; ++r) {
    const std::string suffix = "-r" + std::to_string(r);
    if (!rgb_unpaired.empty()) {
      TrainConfig c = config;
      c.seed = phase_seed(config.seed, r, 0);
      c.phase_tag = "separate-rgb" + suffix;
      train_separate(model.branch(det::Modality::kRgb), rgb_unpaired, c);
    }
    if (!tir_unpaired.empty()) {
      TrainConfig c = config;
      c.seed = phase_seed(config.seed, r, 1);
      c.phase_tag = "separate-tir" + suffix;
      train_separate(model.branch(det::Modality::kTir), tir_unpaired, c);
    }
    TrainConfig c = config;
    c.seed = phase_seed(config.seed, r, 2);
    c.phase_tag = "joint" + suffix;
    last_joint = train_joint(model, paired, c);
  }
  return last_joint;
}

}  // namespace mdqf::train
