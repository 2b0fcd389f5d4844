#include <vector>

#include "doctest.h"
#include "eval_oracle.hpp"
#include "mdqf/evaluation.hpp"
#include "test_util.hpp"

using namespace mdqf;
using mdl::Detection;

namespace {

Detection make_det(const geom::BBox& b, int cls, double score) {
  Detection d;
  d.box = b;
  d.class_id = cls;
  d.score = score;
  return d;
}

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("detections identical to ground truth score one") {
    std::vector<std::vector<geom::GtBox>> gts = {
        {{{0.3, 0.3, 0.2, 0.2}, 0}, {{0.7, 0.7, 0.2, 0.2}, 1}},
        {{{0.5, 0.5, 0.3, 0.3}, 0}}};
    std::vector<std::vector<Detection>> dets(2);
    for (size_t i = 0; i < gts.size(); ++i)
      for (const auto& g : gts[i]) dets[i].push_back(make_det(g.box, g.class_id, 1.0));

    eval::EvalResult r = eval::coco_map(dets, gts);
    CHECK(r.map == doctest::Approx(1.0));
    CHECK(r.map50 == doctest::Approx(1.0));
    CHECK(r.per_class.size() == 2);
    CHECK(r.per_class[0] == doctest::Approx(1.0));
    CHECK(r.num_gts == 3);
    CHECK(r.num_detections == 3);
  }

  TEST_CASE("no detections score zero") {
    std::vector<std::vector<geom::GtBox>> gts = {{{{0.5, 0.5, 0.2, 0.2}, 0}}};
    std::vector<std::vector<Detection>> dets(1);
    eval::EvalResult r = eval::coco_map(dets, gts);
    CHECK(r.map == 0.0);
    CHECK(r.map50 == 0.0);
  }

  TEST_CASE("hand-walked curve: one hit then one false positive gives exactly half") {
    // Two ground truths, one exact hit outranking one false positive:
    // precision 1 at recall 1/2, then no further recall. The interpolated
    // area is exactly 0.5.
    std::vector<std::vector<geom::GtBox>> gts = {
        {{{0.3, 0.3, 0.2, 0.2}, 0}, {{0.7, 0.7, 0.2, 0.2}, 0}}};
    std::vector<std::vector<Detection>> dets = {
        {make_det({0.3, 0.3, 0.2, 0.2}, 0, 0.9), make_det({0.05, 0.9, 0.05, 0.05}, 0, 0.3)}};
    eval::EvalResult r = eval::coco_map(dets, gts);
    CHECK(r.map50 == 0.5);
    CHECK(r.map == 0.5);  // the hit is exact, so every threshold matches
  }

  TEST_CASE("agrees with the brute-force oracle on random micro-instances") {
    Rng rng(2024);
    const std::vector<double> thresholds = eval::coco_thresholds();
    for (int it = 0; it < 200; ++it) {
      std::vector<std::vector<Detection>> dets;
      std::vector<std::vector<geom::GtBox>> gts;
      testoracle::random_micro_instance(rng, dets, gts);

      eval::EvalResult got = eval::coco_map(dets, gts, thresholds, 100);
      testoracle::OracleResult want = testoracle::oracle_eval(dets, gts, thresholds, 100);
      CHECK(got.map == doctest::Approx(want.map).epsilon(1e-9));
      CHECK(got.map50 == doctest::Approx(want.map50).epsilon(1e-9));
      REQUIRE(got.per_class.size() == want.per_class.size());
      for (size_t c = 0; c < want.per_class.size(); ++c)
        CHECK(got.per_class[c] == doctest::Approx(want.per_class[c]).epsilon(1e-9));
      CHECK(got.map <= got.map50 + 1e-12);
      CHECK(got.map50 <= 1.0 + 1e-12);
      CHECK(got.map >= 0.0);
    }
  }

  TEST_CASE("appending a lower-scored duplicate never raises the score") {
    Rng rng(77);
    for (int it = 0; it < 50; ++it) {
      std::vector<std::vector<Detection>> dets;
      std::vector<std::vector<geom::GtBox>> gts;
      testoracle::random_micro_instance(rng, dets, gts);
      if (dets[0].empty()) continue;
      eval::EvalResult before = eval::coco_map(dets, gts);

      Detection dup = dets[0][0];
      dup.score *= 0.5;
      dets[0].push_back(dup);
      eval::EvalResult after = eval::coco_map(dets, gts);
      CHECK(after.map <= before.map + 1e-12);
      CHECK(after.map50 <= before.map50 + 1e-12);
    }
  }

  TEST_CASE("per-image cap drops the lowest-ranked detections") {
    std::vector<std::vector<geom::GtBox>> gts = {{{{0.5, 0.5, 0.2, 0.2}, 0}}};
    std::vector<std::vector<Detection>> dets(1);
    // 100 high-scoring misses rank above the single exact hit.
    for (int i = 0; i < 100; ++i) dets[0].push_back(make_det({0.05, 0.05, 0.04, 0.04}, 0, 0.9));
    dets[0].push_back(make_det({0.5, 0.5, 0.2, 0.2}, 0, 0.4));

    eval::EvalResult capped = eval::coco_map(dets, gts, eval::coco_thresholds(), 100);
    CHECK(capped.map50 == 0.0);
    eval::EvalResult uncapped = eval::coco_map(dets, gts, eval::coco_thresholds(), 200);
    CHECK(uncapped.map50 > 0.0);
  }

  TEST_CASE("classes without ground truth are excluded from the averages") {
    std::vector<std::vector<geom::GtBox>> gts = {{{{0.5, 0.5, 0.2, 0.2}, 0}}};
    std::vector<std::vector<Detection>> dets = {
        {make_det({0.5, 0.5, 0.2, 0.2}, 0, 0.9), make_det({0.2, 0.2, 0.1, 0.1}, 2, 0.8)}};
    eval::EvalResult r = eval::coco_map(dets, gts);
    CHECK(r.map50 == doctest::Approx(1.0));
    REQUIRE(r.per_class.size() == 3);
    CHECK(r.per_class[0] == doctest::Approx(1.0));
    CHECK(r.per_class[1] == -1.0);
    CHECK(r.per_class[2] == -1.0);
  }

  TEST_CASE("invalid class ids are rejected") {
    std::vector<std::vector<geom::GtBox>> gts = {{{{0.5, 0.5, 0.2, 0.2}, 0}}};
    std::vector<std::vector<Detection>> dets = {{make_det({0.5, 0.5, 0.2, 0.2}, -1, 0.9)}};
    CHECK_THROWS_AS(eval::coco_map(dets, gts), std::invalid_argument);
    dets[0][0].class_id = 5;
    CHECK_THROWS_AS(eval::coco_map(dets, gts, eval::coco_thresholds(), 100, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(eval::coco_map({}, gts), std::invalid_argument);
  }
}
