#include <benchmark/benchmark.h>

#include <vector>

#include "mdqf/evaluation.hpp"
#include "mdqf/geometry.hpp"
#include "mdqf/matching.hpp"
#include "mdqf/rng.hpp"

using namespace mdqf;

namespace {

std::vector<geom::ScoredBox> random_boxes(Rng& rng, long n) {
  std::vector<geom::ScoredBox> out;
  out.reserve(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    geom::ScoredBox b;
    b.box = {rng.uniform(), rng.uniform(), 0.05 + 0.2 * rng.uniform(),
             0.05 + 0.2 * rng.uniform()};
    b.class_id = rng.uniform_int(0, 2);
    b.score = rng.uniform();
    out.push_back(b);
  }
  return out;
}

void BM_Nms(benchmark::State& state) {
  Rng rng(1);
  auto boxes = random_boxes(rng, state.range(0));
  for (auto _ : state) {
    auto kept = geom::nms(boxes, 0.5, true);
    benchmark::DoNotOptimize(kept.data());
  }
}
BENCHMARK(BM_Nms)->Arg(40)->Arg(300)->Arg(1800);

void BM_CocoMap(benchmark::State& state) {
  Rng rng(2);
  const long images = state.range(0);
  std::vector<std::vector<mdl::Detection>> dets(static_cast<size_t>(images));
  std::vector<std::vector<geom::GtBox>> gts(static_cast<size_t>(images));
  for (long i = 0; i < images; ++i) {
    for (int g = 0; g < 4; ++g) {
      geom::BBox box{0.2 + 0.15 * g, 0.5, 0.1, 0.1};
      gts[static_cast<size_t>(i)].push_back({box, g % 3});
      for (int d = 0; d < 5; ++d) {
        geom::BBox jit = box;
        jit.cx += 0.02 * rng.normal();
        jit.cy += 0.02 * rng.normal();
        dets[static_cast<size_t>(i)].push_back({jit, g % 3, rng.uniform(), det::Modality::kRgb});
      }
    }
  }
  for (auto _ : state) {
    auto r = eval::coco_map(dets, gts);
    benchmark::DoNotOptimize(r.map);
  }
}
BENCHMARK(BM_CocoMap)->Arg(10)->Arg(50);

void BM_Hungarian(benchmark::State& state) {
  Rng rng(3);
  const long n = state.range(0);
  ad::Matrix cost(n, 2 * n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < 2 * n; ++j) cost(i, j) = rng.uniform();
  for (auto _ : state) {
    auto cols = train::solve_assignment(cost);
    benchmark::DoNotOptimize(cols.data());
  }
}
BENCHMARK(BM_Hungarian)->Arg(20)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
