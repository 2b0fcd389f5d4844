#include <cmath>
#include <cstring>
#include <set>

#include "doctest.h"
#include "mdqf/datagen.hpp"
#include "mdqf/geometry.hpp"
#include "test_util.hpp"

using namespace mdqf;
using gen::SceneSpec;

namespace {

bool images_equal(const img::Image& a, const img::Image& b) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width())
    return false;
  for (long c = 0; c < a.channels(); ++c) {
    const auto& pa = a.planes[static_cast<size_t>(c)];
    const auto& pb = b.planes[static_cast<size_t>(c)];
    if (std::memcmp(pa.data(), pb.data(), sizeof(double) * static_cast<size_t>(pa.size())) != 0)
      return false;
  }
  return true;
}

double image_mean(const img::Image& im) {
  double sum = 0.0;
  long n = 0;
  for (const auto& p : im.planes) {
    sum += p.sum();
    n += p.size();
  }
  return sum / static_cast<double>(n);
}

bool in_unit_range(const img::Image& im) {
  for (const auto& p : im.planes)
    if (p.minCoeff() < 0.0 || p.maxCoeff() > 1.0) return false;
  return true;
}

}  // namespace

TEST_SUITE("datagen") {
  TEST_CASE("zero objects produce a background-only pair") {
    SceneSpec spec;
    spec.min_objects = 0;
    spec.max_objects = 0;
    spec.seed = 5;
    data::PairedSample s = gen::generate_scene(spec);
    CHECK(s.annotations.empty());
    CHECK(s.rgb.channels() == 3);
    CHECK(s.tir.channels() == 1);
    CHECK(s.rgb.height() == 64);
    CHECK(s.tir.width() == 64);
    CHECK(in_unit_range(s.rgb));
    CHECK(in_unit_range(s.tir));
  }

  TEST_CASE("same seed reproduces the sample bitwise") {
    SceneSpec spec;
    spec.seed = 77;
    data::PairedSample a = gen::generate_scene(spec);
    data::PairedSample b = gen::generate_scene(spec);
    CHECK(images_equal(a.rgb, b.rgb));
    CHECK(images_equal(a.tir, b.tir));
    REQUIRE(a.annotations.size() == b.annotations.size());
    for (size_t i = 0; i < a.annotations.size(); ++i) {
      CHECK(a.annotations[i].box.cx == b.annotations[i].box.cx);
      CHECK(a.annotations[i].class_id == b.annotations[i].class_id);
      CHECK(a.annotations[i].visibility == b.annotations[i].visibility);
    }
    spec.seed = 78;
    data::PairedSample c = gen::generate_scene(spec);
    CHECK_FALSE(images_equal(a.rgb, c.rgb));
  }

  TEST_CASE("rgb-only scenes leave the thermal channel at pure background") {
    SceneSpec vis_spec;
    vis_spec.min_objects = 3;
    vis_spec.max_objects = 3;
    vis_spec.p_rgb_only = 1.0;
    vis_spec.p_tir_only = 0.0;
    vis_spec.p_both = 0.0;
    vis_spec.seed = 31;
    SceneSpec empty_spec = vis_spec;
    empty_spec.min_objects = 0;
    empty_spec.max_objects = 0;

    data::PairedSample with_objects = gen::generate_scene(vis_spec);
    data::PairedSample background = gen::generate_scene(empty_spec);
    REQUIRE(with_objects.annotations.size() == 3);
    // Background and noise streams are independent of layout, so the thermal
    // image is bitwise the no-object render.
    CHECK(images_equal(with_objects.tir, background.tir));
    CHECK_FALSE(images_equal(with_objects.rgb, background.rgb));
  }

  TEST_CASE("tir-only scenes leave the color channels at pure background") {
    SceneSpec vis_spec;
    vis_spec.min_objects = 2;
    vis_spec.max_objects = 2;
    vis_spec.p_rgb_only = 0.0;
    vis_spec.p_tir_only = 1.0;
    vis_spec.p_both = 0.0;
    vis_spec.seed = 37;
    SceneSpec empty_spec = vis_spec;
    empty_spec.min_objects = 0;
    empty_spec.max_objects = 0;

    data::PairedSample with_objects = gen::generate_scene(vis_spec);
    data::PairedSample background = gen::generate_scene(empty_spec);
    CHECK(images_equal(with_objects.rgb, background.rgb));
    CHECK_FALSE(images_equal(with_objects.tir, background.tir));
  }

  TEST_CASE("mixed visibility covers all three modes and keeps every object annotated") {
    SceneSpec spec;
    spec.min_objects = 2;
    spec.max_objects = 4;
    spec.seed = 91;
    std::set<data::Visibility> seen;
    long total = 0;
    for (const data::PairedSample& s : gen::generate_dataset(spec, 40)) {
      for (const data::Annotation& a : s.annotations) {
        seen.insert(a.visibility);
        ++total;
      }
      CHECK(s.annotations.size() >= 1);
      CHECK(s.annotations.size() <= 4);
    }
    CHECK(total > 40);
    CHECK(seen.size() == 3);
  }

  TEST_CASE("placed objects respect the pairwise overlap cap") {
    SceneSpec spec;
    spec.min_objects = 4;
    spec.max_objects = 4;
    spec.seed = 13;
    for (const data::PairedSample& s : gen::generate_dataset(spec, 30)) {
      for (size_t i = 0; i < s.annotations.size(); ++i)
        for (size_t j = i + 1; j < s.annotations.size(); ++j)
          CHECK(geom::iou(s.annotations[i].box, s.annotations[j].box) <= 0.3);
      for (const data::Annotation& a : s.annotations) {
        CHECK(a.box.cx > 0.0);
        CHECK(a.box.cx < 1.0);
        CHECK(a.box.cy > 0.0);
        CHECK(a.box.cy < 1.0);
        CHECK(a.box.w > 0.0);
        CHECK(a.box.h > 0.0);
      }
    }
  }

  TEST_CASE("dataset prefix is stable under the per-index seed derivation") {
    SceneSpec spec;
    spec.seed = 55;
    std::vector<data::PairedSample> five = gen::generate_dataset(spec, 5);
    std::vector<data::PairedSample> three = gen::generate_dataset(spec, 3);
    for (size_t i = 0; i < three.size(); ++i) {
      CHECK(images_equal(five[i].rgb, three[i].rgb));
      CHECK(images_equal(five[i].tir, three[i].tir));
    }
  }

  TEST_CASE("invalid specs are rejected") {
    SceneSpec spec;
    spec.p_both = 0.5;  // probabilities now sum to 1.1
    CHECK_THROWS_AS(gen::generate_scene(spec), std::invalid_argument);
    spec = SceneSpec{};
    spec.min_objects = 3;
    spec.max_objects = 2;
    CHECK_THROWS_AS(gen::generate_scene(spec), std::invalid_argument);
    spec = SceneSpec{};
    spec.num_classes = 4;
    CHECK_THROWS_AS(gen::generate_scene(spec), std::invalid_argument);
    spec = SceneSpec{};
    spec.noise = -0.1;
    CHECK_THROWS_AS(gen::generate_scene(spec), std::invalid_argument);
  }

  TEST_CASE("degrade_contrast spans identity to mean collapse") {
    SceneSpec spec;
    spec.seed = 17;
    data::PairedSample s = gen::generate_scene(spec);

    img::Image same = gen::degrade_contrast(s.rgb, 1.0);
    CHECK(images_equal(same, s.rgb));

    const double mean = image_mean(s.rgb);
    img::Image flat = gen::degrade_contrast(s.rgb, 0.0);
    for (const auto& p : flat.planes) {
      CHECK(p.minCoeff() == doctest::Approx(mean).epsilon(1e-15));
      CHECK(p.maxCoeff() == doctest::Approx(mean).epsilon(1e-15));
    }

    img::Image half = gen::degrade_contrast(s.tir, 0.5);
    CHECK(image_mean(half) == doctest::Approx(image_mean(s.tir)).epsilon(1e-12));

    CHECK_THROWS_AS(gen::degrade_contrast(s.rgb, -0.1), std::invalid_argument);
    CHECK_THROWS_AS(gen::degrade_contrast(s.rgb, 1.5), std::invalid_argument);
  }

  TEST_CASE("degrade_contrast halves the spread of a two-value image") {
    img::Image im = img::Image::zeros(1, 2, 2);
    im.planes[0] << 0.0, 0.0, 1.0, 1.0;
    img::Image out = gen::degrade_contrast(im, 0.5);
    CHECK(out.planes[0](0, 0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(out.planes[0](0, 1) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(out.planes[0](1, 0) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(out.planes[0](1, 1) == doctest::Approx(0.75).epsilon(1e-15));
  }
}
