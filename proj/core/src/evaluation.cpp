#include "mdqf/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

namespace mdqf::eval {
namespace {

struct RankedDet {
  double score;
  long image;
  long index;  // rank within the image after the per-image sort
  geom::BBox box;
};

// Exact area under the every-point interpolated precision-recall curve.
double area_ap(const std::vector<char>& tp_flags, long num_gt) {
  const size_t n = tp_flags.size();
  if (n == 0 || num_gt == 0) return 0.0;
  std::vector<double> prec(n), rec(n);
  double tp = 0.0, fp = 0.0;
  for (size_t i = 0; i < n; ++i) {
    (tp_flags[i] ? tp : fp) += 1.0;
    prec[i] = tp / (tp + fp);
    rec[i] = tp / static_cast<double>(num_gt);
  }
  for (size_t i = n - 1; i > 0; --i) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0;
  double prev = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (rec[i] > prev) {
      ap += (rec[i] - prev) * prec[i];
      prev = rec[i];
    }
  }
  return ap;
}

}  // namespace

std::vector<double> coco_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.50 + 0.05 * i);
  return out;
}

EvalResult coco_map(const std::vector<std::vector<mdl::Detection>>& detections,
                    const std::vector<std::vector<geom::GtBox>>& gts,
                    const std::vector<double>& thresholds, long max_dets, long num_classes) {
  if (detections.size() != gts.size()) {
    throw std::invalid_argument("coco_map: image count mismatch");
  }
  if (thresholds.empty()) throw std::invalid_argument("coco_map: no thresholds");

  long derived = 0;
  for (const auto& im : detections)
    for (const mdl::Detection& d : im) {
      if (d.class_id < 0) throw std::invalid_argument("coco_map: unknown class id");
      derived = std::max(derived, static_cast<long>(d.class_id) + 1);
    }
  for (const auto& im : gts)
    for (const geom::GtBox& g : im) {
      if (g.class_id < 0) throw std::invalid_argument("coco_map: unknown class id");
      derived = std::max(derived, static_cast<long>(g.class_id) + 1);
    }
  if (num_classes < 0) {
    num_classes = derived;
  } else if (derived > num_classes) {
    throw std::invalid_argument("coco_map: unknown class id");
  }

  EvalResult result;
  for (const auto& im : detections) result.num_detections += static_cast<long>(im.size());
  for (const auto& im : gts) result.num_gts += static_cast<long>(im.size());

  // Per-image rank by score (ties toward the earlier detection), then cap.
  const long images = static_cast<long>(detections.size());
  std::vector<std::vector<mdl::Detection>> capped(static_cast<size_t>(images));
  for (long i = 0; i < images; ++i) {
    std::vector<long> order(detections[static_cast<size_t>(i)].size());
    for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<long>(k);
    std::stable_sort(order.begin(), order.end(), [&](long a, long b) {
      return detections[static_cast<size_t>(i)][static_cast<size_t>(a)].score >
             detections[static_cast<size_t>(i)][static_cast<size_t>(b)].score;
    });
    if (static_cast<long>(order.size()) > max_dets) order.resize(static_cast<size_t>(max_dets));
    for (long k : order)
      capped[static_cast<size_t>(i)].push_back(detections[static_cast<size_t>(i)][static_cast<size_t>(k)]);
  }

  result.per_class.assign(static_cast<size_t>(num_classes), -1.0);
  double map_sum = 0.0, map50_sum = 0.0;
  long classes_with_gt = 0;

  for (long cls = 0; cls < num_classes; ++cls) {
    long class_gts = 0;
    for (const auto& im : gts)
      for (const geom::GtBox& g : im)
        if (g.class_id == cls) ++class_gts;
    if (class_gts == 0) continue;
    ++classes_with_gt;

    std::vector<RankedDet> ranked;
    for (long i = 0; i < images; ++i) {
      const auto& im = capped[static_cast<size_t>(i)];
      for (size_t k = 0; k < im.size(); ++k)
        if (im[k].class_id == cls) ranked.push_back({im[k].score, i, static_cast<long>(k), im[k].box});
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedDet& a, const RankedDet& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image != b.image) return a.image < b.image;
      return a.index < b.index;
    });

    auto ap_at = [&](double thr) {
      std::vector<std::vector<char>> taken(static_cast<size_t>(images));
      for (long i = 0; i < images; ++i)
        taken[static_cast<size_t>(i)].assign(gts[static_cast<size_t>(i)].size(), 0);

      std::vector<char> tp_flags;
      tp_flags.reserve(ranked.size());
      for (const RankedDet& d : ranked) {
        const auto& im_gts = gts[static_cast<size_t>(d.image)];
        long best = -1;
        double best_iou = 0.0;
        for (size_t g = 0; g < im_gts.size(); ++g) {
          if (im_gts[g].class_id != cls || taken[static_cast<size_t>(d.image)][g]) continue;
          const double iou = geom::iou(d.box, im_gts[g].box);
          if (iou > best_iou) {
            best_iou = iou;
            best = static_cast<long>(g);
          }
        }
        if (best >= 0 && best_iou >= thr) {
          taken[static_cast<size_t>(d.image)][static_cast<size_t>(best)] = 1;
          tp_flags.push_back(1);
        } else {
          tp_flags.push_back(0);
        }
      }
      return area_ap(tp_flags, class_gts);
    };

    double class_ap_sum = 0.0;
    for (double thr : thresholds) class_ap_sum += ap_at(thr);
    map50_sum += ap_at(0.50);
    const double class_ap = class_ap_sum / static_cast<double>(thresholds.size());
    result.per_class[static_cast<size_t>(cls)] = class_ap;
    map_sum += class_ap;
  }

  if (classes_with_gt > 0) {
    result.map = map_sum / static_cast<double>(classes_with_gt);
    result.map50 = map50_sum / static_cast<double>(classes_with_gt);
  }
  return result;
}

}  // namespace mdqf::eval
