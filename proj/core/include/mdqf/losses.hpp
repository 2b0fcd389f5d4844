#pragma once

#include <vector>

#include "mdqf/detector.hpp"
#include "mdqf/geometry.hpp"
#include "mdqf/matching.hpp"
#include "mdqf/model.hpp"

namespace mdqf::train {

struct LossComponents {
  double cls = 0.0;
  double iou = 0.0;
  double l1 = 0.0;

  LossComponents& operator+=(const LossComponents& o) {
    cls += o.cls;
    iou += o.iou;
    l1 += o.l1;
    return *this;
  }
};

struct StageLoss {
  ad::Var total;             // weighted scalar on the tape
  LossComponents components;  // unweighted values for logging
};

// Mean elementwise binary cross entropy with logits, numerically stable.
// pos_weight scales the loss of target-1 entries; 1.0 leaves the graph
// untouched.
ad::Var bce_with_logits_mean(const ad::Var& logits, const ad::Matrix& targets,
                             double pos_weight = 1.0);

// Per-row generalized IoU of differentiable boxes against fixed targets,
// both (m,4) normalized cxcywh; returns (m,1).
ad::Var giou_pairs(const ad::Var& boxes, const ad::Matrix& targets);

// Eq-style composite: alpha * BCE over all N x C logits (matched rows one-hot)
// + beta * mean(1 - giou) + gamma * mean |coordinate delta| over matches.
StageLoss stage_loss(const det::ProposalSet& predictions, const std::vector<geom::GtBox>& gts,
                     const Assignment& assignment, const LossWeights& weights);

// Re-matches and sums stage_loss over all stages; expected_stages guards the
// rollout length this loss is defined over.
StageLoss branch_loss(const std::vector<det::ProposalSet>& stages,
                      const std::vector<geom::GtBox>& gts, const LossWeights& weights,
                      long expected_stages);

StageLoss branch_loss(const std::vector<det::StageOutput>& stages,
                      const std::vector<geom::GtBox>& gts, const LossWeights& weights,
                      long expected_stages);

// Sum of both branch losses, each matched independently against the same
// ground truth.
StageLoss joint_loss(const mdl::FusedForward& forward, const std::vector<geom::GtBox>& gts,
                     const LossWeights& weights, long expected_stages);

}  // namespace mdqf::train
