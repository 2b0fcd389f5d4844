#pragma once

#include <vector>

#include "mdqf/geometry.hpp"
#include "mdqf/model.hpp"

namespace mdqf::eval {

struct EvalResult {
  double map = 0.0;    // mean AP over the threshold sweep
  double map50 = 0.0;  // AP at IoU 0.50 alone
  std::vector<double> per_class;  // threshold-averaged AP, -1 for classes with no ground truth
  long num_detections = 0;
  long num_gts = 0;
};

// 0.50:0.05:0.95, the standard ten-threshold sweep.
std::vector<double> coco_thresholds();

// Greedy highest-IoU matching of score-ranked detections per image, class,
// and threshold; AP is the exact area under the interpolated precision-recall
// curve. detections[i] and gts[i] belong to image i (normalized cxcywh).
// num_classes < 0 derives the class count from the data; classes without
// ground truth are excluded from the averages.
EvalResult coco_map(const std::vector<std::vector<mdl::Detection>>& detections,
                    const std::vector<std::vector<geom::GtBox>>& gts,
                    const std::vector<double>& thresholds = coco_thresholds(), long max_dets = 100,
                    long num_classes = -1);

}  // namespace mdqf::eval
