#pragma once

#include <utility>
#include <vector>

#include "mdqf/detector.hpp"
#include "mdqf/nn.hpp"
#include "mdqf/rng.hpp"

// Cross-branch query fusion. Per stage, the two branches' proposals compete
// in one score-ranked pool; the k winners form a shared proposal set and,
// through directional adapters, a fused query set per branch. Selection is
// hard: gradients flow through the gathered rows only, never the ranking.

namespace mdqf::fus {

using ad::Matrix;
using ad::Tensor;
using ad::Var;

// Residual two-layer perceptron that starts as the identity map, so freshly
// added adapters do not disturb separately trained branches.
struct QueryAdapter {
  nn::Mlp mlp;

  QueryAdapter() = default;
  QueryAdapter(long dim, long hidden, Rng& rng);

  Var adapt(const Var& queries);
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);
};

// to_rgb adapts TIR queries for the RGB decoder; to_tir the reverse.
struct AdapterPair {
  QueryAdapter to_rgb;
  QueryAdapter to_tir;

  AdapterPair() = default;
  AdapterPair(long dim, long hidden, Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& fn);
};

struct FusionConfig {
  long k_train = 0;  // 0 means 2N at use sites
  long k_test = 0;
  long adapter_hidden = 64;

  long resolve_k(long configured, long n) const { return configured > 0 ? configured : 2 * n; }
};

// Union indices into [RGB rows 0..N) ++ [TIR rows N..2N).
struct SelectionIndex {
  std::vector<int> indices;

  bool is_rgb(size_t j, long n) const { return indices[j] < n; }
};

struct FusedState {
  det::ProposalSet proposals;  // (k, ...) consumed by both branches
  Var queries_rgb;             // (k, d)
  Var queries_tir;             // (k, d)
  SelectionIndex z;
};

// Ranks the 2N-proposal union by score descending (ties: RGB before TIR,
// then lower index) and keeps the top k rows.
std::pair<det::ProposalSet, SelectionIndex> select_topk(const det::ProposalSet& rgb,
                                                        const det::ProposalSet& tir, long k);

// Builds both 2N-row candidate stacks (originals plus cross-adapted rows)
// and gathers each with the same selection.
std::pair<Var, Var> gather_fused_queries(const Var& queries_rgb, const Var& queries_tir,
                                         AdapterPair& adapters, const SelectionIndex& z);

FusedState fuse(const det::ProposalSet& p_rgb, const det::ProposalSet& p_tir,
                const Var& q_rgb, const Var& q_tir, AdapterPair& adapters, long k);

}  // namespace mdqf::fus
