#include <benchmark/benchmark.h>

#include "mdqf/fusion.hpp"
#include "mdqf/rng.hpp"

using namespace mdqf;

namespace {

det::ProposalSet random_proposals(Rng& rng, long n, long classes) {
  ad::Matrix boxes(n, 4), logits(n, classes);
  for (long i = 0; i < n; ++i) {
    boxes(i, 0) = rng.uniform();
    boxes(i, 1) = rng.uniform();
    boxes(i, 2) = 0.05 + 0.3 * rng.uniform();
    boxes(i, 3) = 0.05 + 0.3 * rng.uniform();
    for (long c = 0; c < classes; ++c) logits(i, c) = rng.normal() * 2.0;
  }
  det::ProposalSet p;
  p.boxes = ad::constant(boxes);
  p.class_logits = ad::constant(logits);
  p.scores = det::scores_from_logits(p.class_logits);
  return p;
}

// Paper-scale pool: two branches of N=900 queries at d=256 feeding one
// selection per decoder stage.
void BM_SelectTopk(benchmark::State& state) {
  const long n = state.range(0);
  Rng rng(1);
  auto rgb = random_proposals(rng, n, 3);
  auto tir = random_proposals(rng, n, 3);
  ad::NoGradGuard ng;
  for (auto _ : state) {
    auto [fused, z] = fus::select_topk(rgb, tir, n);
    benchmark::DoNotOptimize(z.indices.data());
  }
}
BENCHMARK(BM_SelectTopk)->Arg(20)->Arg(300)->Arg(900);

void BM_FuseStage(benchmark::State& state) {
  const long n = state.range(0);
  const long d = state.range(1);
  Rng rng(2);
  auto rgb = random_proposals(rng, n, 3);
  auto tir = random_proposals(rng, n, 3);
  ad::Matrix qr = ad::Matrix::Random(n, d), qt = ad::Matrix::Random(n, d);
  fus::AdapterPair adapters(d, d, rng);
  ad::NoGradGuard ng;
  for (auto _ : state) {
    auto fused = fus::fuse(rgb, tir, ad::constant(qr), ad::constant(qt), adapters, n);
    benchmark::DoNotOptimize(fused.z.indices.data());
  }
}
BENCHMARK(BM_FuseStage)->Args({20, 64})->Args({900, 256});

}  // namespace

BENCHMARK_MAIN();
