#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "mdqf/trainer.hpp"
#include "test_util.hpp"

using namespace mdqf;
using train::TrainConfig;
using train::TrainStats;

namespace {

mdl::ModelConfig trainer_model_config() {
  mdl::ModelConfig cfg;
  cfg.detector.image_h = 32;
  cfg.detector.image_w = 32;
  cfg.detector.patch = 8;
  cfg.detector.dim = 16;
  cfg.detector.heads = 4;
  cfg.detector.ffn_hidden = 32;
  cfg.detector.encoder_blocks = 1;
  cfg.detector.stages = 2;
  cfg.detector.num_queries = 5;
  cfg.detector.num_classes = 2;
  cfg.fusion.adapter_hidden = 16;
  return cfg;
}

// One bright axis-aligned blob per class id on a dark noisy background.
img::Image blob_image(Rng& rng, long ch, long h, long w, const geom::BBox& box, int cls) {
  img::Image im = img::Image::zeros(ch, h, w);
  for (long c = 0; c < ch; ++c)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) im.planes[c](y, x) = 0.1 + 0.05 * rng.uniform();
  const long x0 = std::max(0L, static_cast<long>((box.cx - box.w / 2) * static_cast<double>(w)));
  const long x1 = std::min(w, static_cast<long>((box.cx + box.w / 2) * static_cast<double>(w)));
  const long y0 = std::max(0L, static_cast<long>((box.cy - box.h / 2) * static_cast<double>(h)));
  const long y1 = std::min(h, static_cast<long>((box.cy + box.h / 2) * static_cast<double>(h)));
  const double level = cls == 0 ? 0.9 : 0.55;
  for (long c = 0; c < ch; ++c)
    for (long y = y0; y < y1; ++y)
      for (long x = x0; x < x1; ++x) im.planes[c](y, x) = level;
  return im;
}

geom::BBox random_box(Rng& rng) {
  return {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.2, 0.4),
          rng.uniform(0.2, 0.4)};
}

std::vector<data::SingleSample> blob_dataset(uint64_t seed, long n, long ch) {
  Rng rng(seed);
  std::vector<data::SingleSample> out;
  for (long i = 0; i < n; ++i) {
    geom::BBox box = random_box(rng);
    int cls = static_cast<int>(rng.uniform_int(0, 1));
    out.push_back({blob_image(rng, ch, 32, 32, box, cls), {{box, cls}}});
  }
  return out;
}

std::vector<data::PairedSample> paired_blob_dataset(uint64_t seed, long n) {
  Rng rng(seed);
  std::vector<data::PairedSample> out;
  for (long i = 0; i < n; ++i) {
    geom::BBox box = random_box(rng);
    int cls = static_cast<int>(rng.uniform_int(0, 1));
    data::PairedSample s;
    s.rgb = blob_image(rng, 3, 32, 32, box, cls);
    s.tir = blob_image(rng, 1, 32, 32, box, cls);
    s.annotations.push_back({box, cls, data::Visibility::kBoth});
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, ad::Matrix> snapshot_params(mdl::MdqfModel& model) {
  std::map<std::string, ad::Matrix> out;
  model.visit_params([&](const std::string& name, ad::Tensor& t) { out[name] = t.value; });
  return out;
}

bool bitwise_equal(const ad::Matrix& a, const ad::Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("joint trainability rule covers exactly decoders, heads, and adapters") {
    CHECK(train::joint_trainable("rgb.decoder.l0.self.q.w"));
    CHECK(train::joint_trainable("tir.decoder.out_ln.gamma"));
    CHECK(train::joint_trainable("rgb.heads.h3.box.fc2.w"));
    CHECK(train::joint_trainable("fusion.s2.to_tir.fc1.b"));
    CHECK_FALSE(train::joint_trainable("rgb.backbone.patch.w"));
    CHECK_FALSE(train::joint_trainable("tir.encoder.b0.attn.q.w"));
    CHECK_FALSE(train::joint_trainable("rgb.queries.content"));
    CHECK_FALSE(train::joint_trainable("tir.encoder.final_ln.beta"));
  }

  TEST_CASE("separate training reduces the loss on a small set") {
    det::DetectorConfig cfg = trainer_model_config().detector;
    cfg.modality = det::Modality::kTir;
    Rng rng(101);
    det::BranchDetector branch(cfg, rng);

    TrainConfig tc;
    tc.epochs = 100;
    tc.max_steps = 50;
    tc.batch_size = 2;
    tc.lr = 1e-3;
    tc.seed = 5;
    TrainStats stats = train::train_separate(branch, blob_dataset(7, 10, 1), tc);
    CHECK(stats.steps == 50);
    CHECK(stats.final_loss < stats.initial_loss);
  }

  TEST_CASE("separate training is bitwise reproducible under a fixed seed") {
    auto run = [](std::vector<ad::Matrix>& values, TrainStats& stats) {
      det::DetectorConfig cfg = trainer_model_config().detector;
      cfg.modality = det::Modality::kRgb;
      Rng rng(55);
      det::BranchDetector branch(cfg, rng);
      TrainConfig tc;
      tc.epochs = 2;
      tc.batch_size = 2;
      tc.lr = 1e-3;
      tc.seed = 9;
      stats = train::train_separate(branch, blob_dataset(13, 6, 3), tc);
      branch.visit_params([&](const std::string&, ad::Tensor& t) { values.push_back(t.value); });
    };
    std::vector<ad::Matrix> a, b;
    TrainStats sa, sb;
    run(a, sa);
    run(b, sb);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(a[i], b[i]));
    CHECK(sa.final_loss == sb.final_loss);
    CHECK(sa.initial_loss == sb.initial_loss);
  }

  TEST_CASE("empty datasets and bad configs are rejected") {
    det::DetectorConfig cfg = trainer_model_config().detector;
    Rng rng(1);
    det::BranchDetector branch(cfg, rng);
    CHECK_THROWS_AS(train::train_separate(branch, {}, {}), std::invalid_argument);

    Rng rng2(2);
    mdl::MdqfModel model(trainer_model_config(), rng2);
    CHECK_THROWS_AS(train::train_joint(model, {}, {}), std::invalid_argument);
    TrainConfig bad;
    bad.lr = 0.0;
    CHECK_THROWS_AS(train::train_separate(branch, blob_dataset(3, 2, 3), bad),
                    std::invalid_argument);
  }

  TEST_CASE("joint training freezes backbone, encoder, and queries bitwise") {
    Rng rng(77);
    mdl::MdqfModel model(trainer_model_config(), rng);
    std::map<std::string, ad::Matrix> before = snapshot_params(model);

    TrainConfig tc;
    tc.epochs = 10;
    tc.max_steps = 8;
    tc.batch_size = 2;
    tc.lr = 1e-3;
    tc.seed = 21;
    train::train_joint(model, paired_blob_dataset(17, 6), tc);

    bool some_trainable_moved = false;
    model.visit_params([&](const std::string& name, ad::Tensor& t) {
      const bool same = bitwise_equal(before.at(name), t.value);
      if (train::joint_trainable(name)) {
        some_trainable_moved = some_trainable_moved || !same;
      } else {
        CHECK_MESSAGE(same, name);
      }
    });
    CHECK(some_trainable_moved);
  }

  TEST_CASE("adapters leave their identity initialization during joint training") {
    Rng rng(83);
    mdl::MdqfModel model(trainer_model_config(), rng);
    std::map<std::string, ad::Matrix> before = snapshot_params(model);

    TrainConfig tc;
    tc.epochs = 10;
    tc.max_steps = 12;
    tc.batch_size = 2;
    tc.lr = 1e-3;
    tc.seed = 31;
    train::train_joint(model, paired_blob_dataset(19, 6), tc);

    const long stages = model.config().detector.stages;
    for (long s = 0; s < stages; ++s) {
      for (const char* dir : {"to_rgb", "to_tir"}) {
        const std::string prefix = "fusion.s" + std::to_string(s) + "." + dir + ".";
        bool moved = false;
        model.visit_params([&](const std::string& name, ad::Tensor& t) {
          if (name.rfind(prefix, 0) == 0 && !bitwise_equal(before.at(name), t.value)) moved = true;
        });
        CHECK_MESSAGE(moved, prefix);
      }
    }
  }

  TEST_CASE("joint loss gradient reaches both branches and every adapter") {
    Rng rng(87);
    mdl::MdqfModel model(trainer_model_config(), rng);
    std::vector<data::PairedSample> ds = paired_blob_dataset(23, 1);

    model.visit_params([&](const std::string&, ad::Tensor& t) { t.zero_grad(); });
    mdl::FusedForward f = model.forward_fused(ds[0].rgb, ds[0].tir, true);
    train::StageLoss l = train::joint_loss(f, data::ground_truth(ds[0]), {},
                                           model.config().detector.stages);
    ad::backward(l.total);

    std::map<std::string, double> group_max;
    model.visit_params([&](const std::string& name, ad::Tensor& t) {
      double g = t.grad.size() > 0 ? t.grad.cwiseAbs().maxCoeff() : 0.0;
      std::string group;
      if (name.rfind("fusion.", 0) == 0) {
        group = name.substr(0, name.find('.', name.find('.', 7) + 1));
      } else if (name.find(".decoder.") != std::string::npos) {
        group = name.substr(0, name.find('.')) + ".decoder";
      } else if (name.find(".heads.") != std::string::npos) {
        group = name.substr(0, name.find('.')) + ".heads";
      } else {
        return;
      }
      group_max[group] = std::max(group_max[group], g);
    });

    CHECK(group_max.at("rgb.decoder") > 0.0);
    CHECK(group_max.at("rgb.heads") > 0.0);
    CHECK(group_max.at("tir.decoder") > 0.0);
    CHECK(group_max.at("tir.heads") > 0.0);
    const long stages = model.config().detector.stages;
    for (long s = 0; s < stages; ++s) {
      CHECK(group_max.at("fusion.s" + std::to_string(s) + ".to_rgb") > 0.0);
      CHECK(group_max.at("fusion.s" + std::to_string(s) + ".to_tir") > 0.0);
    }
  }

  TEST_CASE("max_steps cuts an epoch short") {
    det::DetectorConfig cfg = trainer_model_config().detector;
    Rng rng(3);
    det::BranchDetector branch(cfg, rng);
    TrainConfig tc;
    tc.epochs = 5;
    tc.max_steps = 7;
    tc.batch_size = 2;
    tc.seed = 1;
    TrainStats stats = train::train_separate(branch, blob_dataset(29, 8, 3), tc);
    CHECK(stats.steps == 7);
  }

  TEST_CASE("step log is one JSON record per line") {
    const std::string path = "trainer_log_test.jsonl";
    std::remove(path.c_str());

    det::DetectorConfig cfg = trainer_model_config().detector;
    Rng rng(5);
    det::BranchDetector branch(cfg, rng);
    TrainConfig tc;
    tc.epochs = 10;
    tc.max_steps = 5;
    tc.batch_size = 2;
    tc.seed = 2;
    tc.log_path = path;
    tc.phase_tag = "separate-test";
    train::train_separate(branch, blob_dataset(31, 4, 3), tc);

    std::ifstream in(path);
    REQUIRE(in.is_open());
    std::string line;
    long count = 0;
    while (std::getline(in, line)) {
      nlohmann::json j = nlohmann::json::parse(line);
      CHECK(j.at("phase") == "separate-test");
      CHECK(j.at("step") == count + 1);
      CHECK(j.at("loss").is_number());
      CHECK(j.at("cls").is_number());
      CHECK(j.at("iou").is_number());
      CHECK(j.at("l1").is_number());
      CHECK(j.at("wall_ms").is_number());
      ++count;
    }
    CHECK(count == 5);
    std::remove(path.c_str());
  }

  TEST_CASE("loop with empty unpaired sets leaves separate-phase parameters frozen") {
    Rng rng(95);
    mdl::MdqfModel model(trainer_model_config(), rng);
    std::map<std::string, ad::Matrix> before = snapshot_params(model);

    TrainConfig tc;
    tc.epochs = 1;
    tc.max_steps = 4;
    tc.batch_size = 2;
    tc.lr = 1e-3;
    tc.seed = 11;
    CHECK_THROWS_AS(
        train::separate_to_joint_loop(model, {}, {}, paired_blob_dataset(37, 4), 0, tc),
        std::invalid_argument);
    TrainStats stats =
        train::separate_to_joint_loop(model, {}, {}, paired_blob_dataset(37, 4), 1, tc);
    CHECK(stats.steps == 2);  // one epoch, four samples, batch two
    model.visit_params([&](const std::string& name, ad::Tensor& t) {
      if (!train::joint_trainable(name)) CHECK_MESSAGE(bitwise_equal(before.at(name), t.value), name);
    });
  }

  TEST_CASE("loop with unpaired data trains branch backbones between joint phases") {
    Rng rng(97);
    mdl::MdqfModel model(trainer_model_config(), rng);
    std::map<std::string, ad::Matrix> before = snapshot_params(model);

    TrainConfig tc;
    tc.epochs = 1;
    tc.max_steps = 3;
    tc.batch_size = 2;
    tc.lr = 1e-3;
    tc.seed = 13;
    train::separate_to_joint_loop(model, blob_dataset(41, 4, 3), blob_dataset(43, 4, 1),
                                  paired_blob_dataset(47, 4), 1, tc);

    bool rgb_backbone_moved = false;
    bool tir_backbone_moved = false;
    model.visit_params([&](const std::string& name, ad::Tensor& t) {
      if (bitwise_equal(before.at(name), t.value)) return;
      if (name.rfind("rgb.backbone.", 0) == 0) rgb_backbone_moved = true;
      if (name.rfind("tir.backbone.", 0) == 0) tir_backbone_moved = true;
    });
    CHECK(rgb_backbone_moved);
    CHECK(tir_backbone_moved);
  }
}
