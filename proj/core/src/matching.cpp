#include "mdqf/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mdqf::train {

std::vector<int> solve_assignment(const ad::Matrix& cost) {
  const long n = cost.rows();
  const long m = cost.cols();
  if (n > m) throw std::invalid_argument("solve_assignment: more rows than columns");
  if (!cost.allFinite()) throw std::invalid_argument("solve_assignment: non-finite costs");
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Shortest augmenting paths with potentials, 1-indexed over columns.
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<size_t>(m) + 1, 0.0);
  std::vector<long> match(static_cast<size_t>(m) + 1, 0);  // column -> row
  std::vector<long> way(static_cast<size_t>(m) + 1, 0);

  for (long i = 1; i <= n; ++i) {
    match[0] = i;
    long j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m) + 1, kInf);
    std::vector<bool> used(static_cast<size_t>(m) + 1, false);
    do {
      used[static_cast<size_t>(j0)] = true;
      const long i0 = match[static_cast<size_t>(j0)];
      double delta = kInf;
      long j1 = 0;
      for (long j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] -
                           v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (long j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      const long j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (long j = 1; j <= m; ++j)
    if (match[static_cast<size_t>(j)] != 0)
      row_to_col[static_cast<size_t>(match[static_cast<size_t>(j)] - 1)] =
          static_cast<int>(j - 1);
  return row_to_col;
}

Assignment hungarian_match(const det::ProposalSet& predictions,
                           const std::vector<geom::GtBox>& gts, const LossWeights& weights) {
  const long n_pred = predictions.boxes.rows();
  const long n_gt = static_cast<long>(gts.size());
  Assignment out;
  if (n_gt == 0) {
    for (long i = 0; i < n_pred; ++i) out.unmatched_predictions.push_back(static_cast<int>(i));
    return out;
  }

  const ad::Matrix& boxes = predictions.boxes.value();
  const ad::Matrix& logits = predictions.class_logits.value();
  ad::Matrix cost(n_pred, n_gt);
  for (long i = 0; i < n_pred; ++i) {
    const geom::BBox pb{boxes(i, 0), boxes(i, 1), boxes(i, 2), boxes(i, 3)};
    for (long j = 0; j < n_gt; ++j) {
      const geom::BBox& gb = gts[static_cast<size_t>(j)].box;
      const double logit = logits(i, gts[static_cast<size_t>(j)].class_id);
      const double prob = 1.0 / (1.0 + std::exp(-logit));
      const double l1 = (std::abs(pb.cx - gb.cx) + std::abs(pb.cy - gb.cy) +
                         std::abs(pb.w - gb.w) + std::abs(pb.h - gb.h)) /
                        4.0;
      cost(i, j) = weights.alpha * (1.0 - prob) + weights.beta * (1.0 - geom::giou(pb, gb)) +
                   weights.gamma * l1;
    }
  }

  std::vector<bool> matched(static_cast<size_t>(n_pred), false);
  if (n_gt <= n_pred) {
    // Assign every ground truth a distinct prediction.
    std::vector<int> gt_to_pred = solve_assignment(cost.transpose());
    for (long j = 0; j < n_gt; ++j) {
      out.pairs.emplace_back(gt_to_pred[static_cast<size_t>(j)], static_cast<int>(j));
      matched[static_cast<size_t>(gt_to_pred[static_cast<size_t>(j)])] = true;
    }
  } else {
    std::vector<int> pred_to_gt = solve_assignment(cost);
    for (long i = 0; i < n_pred; ++i) {
      out.pairs.emplace_back(static_cast<int>(i), pred_to_gt[static_cast<size_t>(i)]);
      matched[static_cast<size_t>(i)] = true;
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (long i = 0; i < n_pred; ++i)
    if (!matched[static_cast<size_t>(i)]) out.unmatched_predictions.push_back(static_cast<int>(i));
  return out;
}

}  // namespace mdqf::train
