#pragma once

#include <utility>
#include <vector>

#include "mdqf/detector.hpp"
#include "mdqf/geometry.hpp"

namespace mdqf::train {

struct LossWeights {
  double alpha = 0.125;
  double beta = 0.25;
  double gamma = 0.625;
  // Multiplier on positive-entry BCE terms; 1.0 is plain BCE. Counteracts the
  // background-dominated gradient when queries far outnumber objects.
  double pos_weight = 1.0;
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (prediction, ground truth)
  std::vector<int> unmatched_predictions;
};

// Minimum-cost assignment of all rows to distinct columns; requires
// rows <= cols. Returns the column picked for each row.
std::vector<int> solve_assignment(const ad::Matrix& cost);

// Optimal bipartite match under
// cost(i,j) = alpha (1 - prob_i[class_j]) + beta (1 - giou) + gamma mean|box delta|.
// Matches min(#preds, #gts) pairs; costs are computed on values only.
Assignment hungarian_match(const det::ProposalSet& predictions,
                           const std::vector<geom::GtBox>& gts, const LossWeights& weights);

}  // namespace mdqf::train
