#pragma once

#include <vector>

namespace mdqf::geom {

// Axis-aligned box in normalized center-size parameterization.
struct BBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct Corners {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
};

Corners to_corners(const BBox& b);
BBox from_corners(const Corners& c);

double area(const BBox& b);

/// Intersection over union; 0 when the union has zero area.
double iou(const BBox& a, const BBox& b);

/// Generalized IoU in [-1,1]; 0 when the enclosing hull has zero area.
double giou(const BBox& a, const BBox& b);

struct ScoredBox {
  BBox box;
  int class_id = 0;
  double score = 0.0;
};

/// A ground-truth object: box plus class label.
struct GtBox {
  BBox box;
  int class_id = 0;
};

// Greedy score-descending suppression. Returns kept indices in descending
// score order; equal scores break toward the lower original index. A
// candidate is suppressed when its IoU with an already kept box is strictly
// above the threshold (restricted to the same class when class_aware).
std::vector<int> nms(const std::vector<ScoredBox>& dets, double iou_threshold, bool class_aware);

}  // namespace mdqf::geom
