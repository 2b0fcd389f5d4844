#include "mdqf/losses.hpp"

#include <stdexcept>

namespace mdqf::train {

using ad::Var;

Var bce_with_logits_mean(const Var& logits, const ad::Matrix& targets, double pos_weight) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw std::invalid_argument("bce_with_logits_mean: shape mismatch");
  }
  if (pos_weight <= 0.0) {
    throw std::invalid_argument("bce_with_logits_mean: pos_weight must be positive");
  }
  // relu(x) - x*t + log(1 + e^-|x|), stable for large |x|.
  Var t = ad::constant(targets);
  Var stable = ad::sub(ad::relu(logits), ad::mul(logits, t));
  Var tail = ad::softplus(ad::neg(ad::abs(logits)));
  Var entry = ad::add(stable, tail);
  if (pos_weight != 1.0) {
    // Target-1 entries reduce to -log sigmoid(x); scaling the whole entry
    // matches the usual pos_weight semantics.
    ad::Matrix scale = ad::Matrix::Ones(targets.rows(), targets.cols()) +
                       (pos_weight - 1.0) * targets;
    entry = ad::mul(entry, ad::constant(std::move(scale)));
  }
  return ad::mean_all(entry);
}

Var giou_pairs(const Var& boxes, const ad::Matrix& targets) {
  if (boxes.cols() != 4 || targets.cols() != 4 || boxes.rows() != targets.rows()) {
    throw std::invalid_argument("giou_pairs: expected matching (m,4) inputs");
  }
  const long m = boxes.rows();

  Var pcx = ad::slice_cols(boxes, 0, 1);
  Var pcy = ad::slice_cols(boxes, 1, 1);
  Var pw = ad::slice_cols(boxes, 2, 1);
  Var ph = ad::slice_cols(boxes, 3, 1);
  Var px1 = ad::sub(pcx, ad::scale(pw, 0.5));
  Var px2 = ad::add(pcx, ad::scale(pw, 0.5));
  Var py1 = ad::sub(pcy, ad::scale(ph, 0.5));
  Var py2 = ad::add(pcy, ad::scale(ph, 0.5));

  ad::Matrix tx1(m, 1), tx2(m, 1), ty1(m, 1), ty2(m, 1), tarea(m, 1);
  for (long i = 0; i < m; ++i) {
    tx1(i, 0) = targets(i, 0) - 0.5 * targets(i, 2);
    tx2(i, 0) = targets(i, 0) + 0.5 * targets(i, 2);
    ty1(i, 0) = targets(i, 1) - 0.5 * targets(i, 3);
    ty2(i, 0) = targets(i, 1) + 0.5 * targets(i, 3);
    tarea(i, 0) = targets(i, 2) * targets(i, 3);
  }
  Var cx1 = ad::constant(tx1);
  Var cx2 = ad::constant(tx2);
  Var cy1 = ad::constant(ty1);
  Var cy2 = ad::constant(ty2);

  Var iw = ad::relu(ad::sub(ad::min_elem(px2, cx2), ad::max_elem(px1, cx1)));
  Var ih = ad::relu(ad::sub(ad::min_elem(py2, cy2), ad::max_elem(py1, cy1)));
  Var inter = ad::mul(iw, ih);
  Var uni = ad::sub(ad::add(ad::mul(pw, ph), ad::constant(tarea)), inter);

  Var hw = ad::sub(ad::max_elem(px2, cx2), ad::min_elem(px1, cx1));
  Var hh = ad::sub(ad::max_elem(py2, cy2), ad::min_elem(py1, cy1));
  Var hull = ad::mul(hw, hh);

  // Requires positive extents on both sides so uni and hull stay nonzero.
  return ad::sub(ad::div(inter, uni), ad::div(ad::sub(hull, uni), hull));
}

StageLoss stage_loss(const det::ProposalSet& predictions, const std::vector<geom::GtBox>& gts,
                     const Assignment& assignment, const LossWeights& weights) {
  const long n = predictions.class_logits.rows();
  const long c = predictions.class_logits.cols();

  ad::Matrix targets = ad::Matrix::Zero(n, c);
  for (const auto& [pred, gt] : assignment.pairs) {
    targets(pred, gts[static_cast<size_t>(gt)].class_id) = 1.0;
  }
  Var cls = bce_with_logits_mean(predictions.class_logits, targets, weights.pos_weight);

  StageLoss out;
  out.components.cls = cls.value()(0, 0);
  if (assignment.pairs.empty()) {
    out.total = ad::scale(cls, weights.alpha);
    return out;
  }

  std::vector<int> matched;
  matched.reserve(assignment.pairs.size());
  ad::Matrix tboxes(static_cast<long>(assignment.pairs.size()), 4);
  long row = 0;
  for (const auto& [pred, gt] : assignment.pairs) {
    matched.push_back(pred);
    const geom::BBox& b = gts[static_cast<size_t>(gt)].box;
    tboxes(row, 0) = b.cx;
    tboxes(row, 1) = b.cy;
    tboxes(row, 2) = b.w;
    tboxes(row, 3) = b.h;
    ++row;
  }
  Var picked = ad::gather_rows(predictions.boxes, matched);
  Var iou = ad::mean_all(ad::add_scalar(ad::neg(giou_pairs(picked, tboxes)), 1.0));
  Var l1 = ad::mean_all(ad::abs(ad::sub(picked, ad::constant(tboxes))));

  out.components.iou = iou.value()(0, 0);
  out.components.l1 = l1.value()(0, 0);
  out.total = ad::add(ad::scale(cls, weights.alpha),
                      ad::add(ad::scale(iou, weights.beta), ad::scale(l1, weights.gamma)));
  return out;
}

StageLoss branch_loss(const std::vector<det::ProposalSet>& stages,
                      const std::vector<geom::GtBox>& gts, const LossWeights& weights,
                      long expected_stages) {
  if (static_cast<long>(stages.size()) != expected_stages) {
    throw std::invalid_argument("branch_loss: unexpected stage count");
  }
  StageLoss out;
  for (const det::ProposalSet& stage : stages) {
    Assignment a = hungarian_match(stage, gts, weights);
    StageLoss sl = stage_loss(stage, gts, a, weights);
    out.total = out.total.defined() ? ad::add(out.total, sl.total) : sl.total;
    out.components += sl.components;
  }
  return out;
}

StageLoss branch_loss(const std::vector<det::StageOutput>& stages,
                      const std::vector<geom::GtBox>& gts, const LossWeights& weights,
                      long expected_stages) {
  std::vector<det::ProposalSet> props;
  props.reserve(stages.size());
  for (const det::StageOutput& s : stages) props.push_back(s.proposals);
  return branch_loss(props, gts, weights, expected_stages);
}

StageLoss joint_loss(const mdl::FusedForward& forward, const std::vector<geom::GtBox>& gts,
                     const LossWeights& weights, long expected_stages) {
  StageLoss rgb = branch_loss(forward.rgb, gts, weights, expected_stages);
  StageLoss tir = branch_loss(forward.tir, gts, weights, expected_stages);
  StageLoss out;
  out.total = ad::add(rgb.total, tir.total);
  out.components = rgb.components;
  out.components += tir.components;
  return out;
}

}  // namespace mdqf::train
