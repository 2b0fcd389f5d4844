#pragma once

#include <string>
#include <vector>

#include "mdqf/dataset.hpp"
#include "mdqf/evaluation.hpp"
#include "mdqf/model.hpp"
#include "mdqf/trainer.hpp"

// Experiment protocols over trained artifacts. Every table is a pure
// function of (model parameters, dataset, config), rendered as strings with
// fixed formatting so identical runs produce identical files.

namespace mdqf::eval {

struct Table {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::string to_csv(const Table& t);
std::string to_markdown(const Table& t);
// Writes <dir>/<basename>.csv and <dir>/<basename>.md, creating dir.
void write_table(const Table& t, const std::string& dir, const std::string& basename);

struct ProtocolConfig {
  mdl::PostprocConfig postproc;
  long num_classes = 3;
};

// Fused rollout + postprocess per pair.
EvalResult evaluate_fused(mdl::MdqfModel& model, const std::vector<data::PairedSample>& set,
                          const ProtocolConfig& pc);
// Single-branch path on the surviving modality of each pair.
EvalResult evaluate_missing(mdl::MdqfModel& model, det::Modality present,
                            const std::vector<data::PairedSample>& set, const ProtocolConfig& pc);
// Early-fusion baseline over the pixel-wise mean image.
EvalResult evaluate_image_baseline(det::BranchDetector& detector,
                                   const std::vector<data::PairedSample>& set,
                                   const ProtocolConfig& pc);
// Late-fusion baseline merging both branches' independent final sets.
EvalResult evaluate_box_baseline(mdl::MdqfModel& model, const std::vector<data::PairedSample>& set,
                                 const ProtocolConfig& pc);

// Mean-image view of a paired set, for training the early-fusion baseline on
// exactly the pixels evaluate_image_baseline sees.
std::vector<data::SingleSample> mean_fused_dataset(const std::vector<data::PairedSample>& set,
                                                   long channels);

// Applies contrast degradation to one modality of every pair.
std::vector<data::PairedSample> degrade_set(const std::vector<data::PairedSample>& set,
                                            det::Modality which, double factor);

// Single-branch rows versus the fused row on one test set.
Table run_fusion_comparison(mdl::MdqfModel& model, const std::vector<data::PairedSample>& test_set,
                            const ProtocolConfig& pc);

// {none, rgb-degraded, tir-degraded} x {fused, survivor-only, image baseline}
// grid with relative drops against each path's clean row. image_baseline may
// be null to skip baseline rows.
Table run_robustness(mdl::MdqfModel& model, det::BranchDetector* image_baseline,
                     const std::vector<data::PairedSample>& test_set, double factor,
                     const ProtocolConfig& pc);

// Inference-only selection-width sweep plus the two postprocessing rows; the
// model's configured k values are restored afterwards.
Table run_k_ablation(mdl::MdqfModel& model, const std::vector<data::PairedSample>& test_set,
                     const std::vector<long>& k2_values, const ProtocolConfig& pc);

struct DecoupledOptions {
  train::TrainConfig fresh_separate;   // fresh branch training on the full single-modality sets
  train::TrainConfig finetune;         // joint fine-tune on the paired subset
  std::vector<std::string> variants = {"none", "rgb", "tir", "both"};
  unsigned long long init_seed = 0;    // fresh branch initialization
};

// Branch-replacement protocol: train fresh branches on the full
// single-modality sets, graft them into copies of the initial model, joint
// fine-tune, and report deltas against the initial fused metrics. The "none"
// variant is the untouched control. Throws if a graft changes any byte
// outside the replaced branch.
Table run_decoupled_update(mdl::MdqfModel& initial,
                           const std::vector<data::PairedSample>& paired_subset,
                           const std::vector<data::SingleSample>& rgb_full,
                           const std::vector<data::SingleSample>& tir_full,
                           const std::vector<data::PairedSample>& test_set,
                           const DecoupledOptions& opts, const ProtocolConfig& pc);

}  // namespace mdqf::eval
