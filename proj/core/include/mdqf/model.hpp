#pragma once

#include <vector>

#include "mdqf/detector.hpp"
#include "mdqf/fusion.hpp"
#include "mdqf/geometry.hpp"
#include "mdqf/image.hpp"

// Two single-modality branches coupled only through per-stage query fusion.
// Either branch runs standalone when its partner's input is missing; the
// fused path inserts a fusion step before every decoder stage, after which
// both branches decode the same shared proposals with their own memories.

namespace mdqf::mdl {

using ad::Var;

struct ModelConfig {
  det::DetectorConfig detector;  // per-branch modality is set internally
  fus::FusionConfig fusion;
};

struct FusedForward {
  std::vector<det::StageOutput> rgb;
  std::vector<det::StageOutput> tir;
  std::vector<fus::FusedState> fused;  // fusion record entering each stage
};

struct Detection {
  geom::BBox box;
  int class_id = 0;
  double score = 0.0;
  det::Modality origin = det::Modality::kRgb;
};

enum class PostprocMode { kNms, kTopk };

PostprocMode postproc_mode_from_name(const std::string& name);
const char* postproc_mode_name(PostprocMode m);

struct PostprocConfig {
  PostprocMode mode = PostprocMode::kNms;
  double nms_iou = 0.5;
  long topk = 300;
  double score_floor = 0.05;
};

class MdqfModel {
 public:
  MdqfModel(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  det::BranchDetector& branch(det::Modality m);
  fus::AdapterPair& adapters(long stage);

  // k values steer selection width only; no parameter shapes depend on them.
  void set_fusion_k(long k_train, long k_test);

  // Paired inference/training rollout; k resolves from k_train or k_test.
  FusedForward forward_fused(const img::Image& rgb, const img::Image& tir, bool training);

  // Single branch, no fusion involvement at all.
  std::vector<det::StageOutput> forward_missing(det::Modality m, const img::Image& image);

  void visit_params(const nn::ParamVisitor& fn);    // rgb.*, tir.*, fusion.*
  void visit_adapters(const nn::ParamVisitor& fn);  // fusion.* only

 private:
  ModelConfig cfg_;
  det::BranchDetector rgb_;
  det::BranchDetector tir_;
  std::vector<fus::AdapterPair> adapters_;
};

// Tags, floors, and deduplicates the two final-stage proposal sets into a
// ranked detection list.
std::vector<Detection> postprocess(const det::ProposalSet& rgb_final,
                                   const det::ProposalSet& tir_final, const PostprocConfig& cfg);

std::vector<Detection> postprocess_single(const det::ProposalSet& final_set, det::Modality origin,
                                          const PostprocConfig& cfg);

// Pixel-wise mean of both inputs, each broadcast across `channels` planes.
img::Image mean_image(const img::Image& rgb, const img::Image& tir, long channels);

// Early-fusion baseline: one detector over the pixel-wise mean of both
// images (thermal broadcast across color channels as needed).
std::vector<Detection> baseline_image_fusion(det::BranchDetector& detector,
                                             const img::Image& rgb, const img::Image& tir,
                                             const PostprocConfig& cfg);

// Late-fusion baseline: run both detectors independently, merge final sets.
std::vector<Detection> baseline_box_fusion(det::BranchDetector& rgb_detector,
                                           det::BranchDetector& tir_detector,
                                           const img::Image& rgb, const img::Image& tir,
                                           const PostprocConfig& cfg);

}  // namespace mdqf::mdl
