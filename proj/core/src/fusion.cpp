#include "mdqf/fusion.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace mdqf::fus {

QueryAdapter::QueryAdapter(long dim, long hidden, Rng& rng) : mlp(dim, hidden, dim, rng) {
  mlp.fc2.zero_init();
}

Var QueryAdapter::adapt(const Var& queries) {
  if (queries.cols() != mlp.fc1.w.value.rows())
    throw std::invalid_argument("adapt: query width does not match adapter");
  return ad::add(queries, mlp.forward(queries));
}

void QueryAdapter::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  mlp.visit(prefix, fn);
}

AdapterPair::AdapterPair(long dim, long hidden, Rng& rng)
    : to_rgb(dim, hidden, rng), to_tir(dim, hidden, rng) {}

void AdapterPair::visit(const std::string& prefix, const nn::ParamVisitor& fn) {
  to_rgb.visit(prefix + ".to_rgb", fn);
  to_tir.visit(prefix + ".to_tir", fn);
}

std::pair<det::ProposalSet, SelectionIndex> select_topk(const det::ProposalSet& rgb,
                                                        const det::ProposalSet& tir, long k) {
  const long n = rgb.scores.rows();
  if (tir.scores.rows() != n) throw std::invalid_argument("select_topk: branch sizes differ");
  if (k < 1 || k > 2 * n) throw std::invalid_argument("select_topk: k out of range");

  std::vector<int> order(static_cast<size_t>(2 * n));
  std::iota(order.begin(), order.end(), 0);
  auto score_of = [&](int u) {
    return u < n ? rgb.scores.value()(u, 0) : tir.scores.value()(u - n, 0);
  };
  // Union order is RGB rows then TIR rows, so the index itself encodes the
  // RGB-before-TIR tie rule.
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score_of(a) > score_of(b); });
  order.resize(static_cast<size_t>(k));

  SelectionIndex z{std::move(order)};
  det::ProposalSet fused;
  fused.boxes = ad::gather_rows(ad::concat_rows({rgb.boxes, tir.boxes}), z.indices);
  fused.class_logits = ad::gather_rows(ad::concat_rows({rgb.class_logits, tir.class_logits}),
                                       z.indices);
  fused.scores = ad::gather_rows(ad::concat_rows({rgb.scores, tir.scores}), z.indices);
  return {std::move(fused), std::move(z)};
}

std::pair<Var, Var> gather_fused_queries(const Var& queries_rgb, const Var& queries_tir,
                                         AdapterPair& adapters, const SelectionIndex& z) {
  const long n = queries_rgb.rows();
  for (int u : z.indices)
    if (u < 0 || u >= 2 * n) throw std::out_of_range("gather_fused_queries: index out of bounds");

  Var stack_rgb = ad::concat_rows({queries_rgb, adapters.to_rgb.adapt(queries_tir)});
  Var stack_tir = ad::concat_rows({adapters.to_tir.adapt(queries_rgb), queries_tir});
  return {ad::gather_rows(stack_rgb, z.indices), ad::gather_rows(stack_tir, z.indices)};
}

FusedState fuse(const det::ProposalSet& p_rgb, const det::ProposalSet& p_tir, const Var& q_rgb,
                const Var& q_tir, AdapterPair& adapters, long k) {
  auto [fused, z] = select_topk(p_rgb, p_tir, k);
  auto [fq_rgb, fq_tir] = gather_fused_queries(q_rgb, q_tir, adapters, z);
  return FusedState{std::move(fused), std::move(fq_rgb), std::move(fq_tir), std::move(z)};
}

}  // namespace mdqf::fus
