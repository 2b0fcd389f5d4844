#include "mdqf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdqf::geom {

Corners to_corners(const BBox& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

BBox from_corners(const Corners& c) {
  return {(c.x1 + c.x2) / 2.0, (c.y1 + c.y2) / 2.0, c.x2 - c.x1, c.y2 - c.y1};
}

double area(const BBox& b) { return b.w * b.h; }

namespace {

double intersection_area(const Corners& a, const Corners& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double hull_area(const Corners& a, const Corners& b) {
  const double hw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  const double hh = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  return hw * hh;
}

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const Corners ca = to_corners(a);
  const Corners cb = to_corners(b);
  const double inter = intersection_area(ca, cb);
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double giou(const BBox& a, const BBox& b) {
  const Corners ca = to_corners(a);
  const Corners cb = to_corners(b);
  const double inter = intersection_area(ca, cb);
  const double uni = area(a) + area(b) - inter;
  const double hull = hull_area(ca, cb);
  if (hull <= 0.0) return 0.0;
  const double i = uni > 0.0 ? inter / uni : 0.0;
  return i - (hull - uni) / hull;
}

std::vector<int> nms(const std::vector<ScoredBox>& dets, double iou_threshold, bool class_aware) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    if (dets[i].score != dets[j].score) return dets[i].score > dets[j].score;
    return i < j;
  });

  std::vector<int> kept;
  kept.reserve(dets.size());
  for (int idx : order) {
    bool suppressed = false;
    for (int k : kept) {
      if (class_aware && dets[k].class_id != dets[idx].class_id) continue;
      if (iou(dets[k].box, dets[idx].box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace mdqf::geom
