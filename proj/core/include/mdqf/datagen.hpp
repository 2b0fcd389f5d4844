#pragma once

#include <cstdint>
#include <vector>

#include "mdqf/dataset.hpp"

namespace mdqf::gen {

// Class ids double as shapes: 0 disk, 1 square, 2 triangle.
struct SceneSpec {
  long image_h = 64;
  long image_w = 64;
  long min_objects = 1;
  long max_objects = 4;
  long num_classes = 3;
  double p_rgb_only = 0.3;
  double p_tir_only = 0.3;
  double p_both = 0.4;
  double noise = 0.02;
  uint64_t seed = 0;
};

void validate(const SceneSpec& spec);

// The sample is a pure function of the spec, seed included. Objects that
// cannot be placed under the overlap cap within the retry budget are dropped;
// the count of dropped objects lands in placement_shortfall when given.
data::PairedSample generate_scene(const SceneSpec& spec, long* placement_shortfall = nullptr);

// count samples with per-index derived seeds; spec.seed is the stream root.
std::vector<data::PairedSample> generate_dataset(const SceneSpec& spec, long count);

// out = mean + factor * (image - mean) with a single scalar mean over all
// channels; factor 0 collapses the image to that mean.
img::Image degrade_contrast(const img::Image& image, double factor);

}  // namespace mdqf::gen
