#include <benchmark/benchmark.h>

#include "mdqf/datagen.hpp"
#include "mdqf/losses.hpp"
#include "mdqf/model.hpp"

using namespace mdqf;

namespace {

mdl::ModelConfig desk_config() {
  mdl::ModelConfig cfg;  // library defaults: d=64, N=20, 64x64, 6 stages
  return cfg;
}

gen::SceneSpec desk_scene() {
  gen::SceneSpec spec;
  spec.seed = 5;
  return spec;
}

void BM_ForwardSingle(benchmark::State& state) {
  Rng rng(1);
  mdl::MdqfModel model(desk_config(), rng);
  auto pair = gen::generate_scene(desk_scene());
  ad::NoGradGuard ng;
  for (auto _ : state) {
    auto stages = model.forward_missing(det::Modality::kRgb, pair.rgb);
    benchmark::DoNotOptimize(stages.back().proposals.scores.value().data());
  }
}
BENCHMARK(BM_ForwardSingle);

void BM_ForwardFused(benchmark::State& state) {
  Rng rng(2);
  mdl::MdqfModel model(desk_config(), rng);
  auto pair = gen::generate_scene(desk_scene());
  ad::NoGradGuard ng;
  for (auto _ : state) {
    auto fwd = model.forward_fused(pair.rgb, pair.tir, false);
    benchmark::DoNotOptimize(fwd.fused.back().z.indices.data());
  }
}
BENCHMARK(BM_ForwardFused);

void BM_FusedTrainingStep(benchmark::State& state) {
  Rng rng(3);
  mdl::MdqfModel model(desk_config(), rng);
  auto pair = gen::generate_scene(desk_scene());
  const auto gts = data::ground_truth(pair);
  for (auto _ : state) {
    auto fwd = model.forward_fused(pair.rgb, pair.tir, true);
    auto loss = train::joint_loss(fwd, gts, train::LossWeights{},
                                  model.config().detector.stages);
    ad::backward(loss.total);
    benchmark::DoNotOptimize(loss.total.value().data());
    model.visit_params([](const std::string&, ad::Tensor& t) { t.grad.setZero(); });
  }
}
BENCHMARK(BM_FusedTrainingStep);

}  // namespace

BENCHMARK_MAIN();
