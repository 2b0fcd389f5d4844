#include "mdqf/model.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace mdqf::mdl {

PostprocMode postproc_mode_from_name(const std::string& name) {
  if (name == "nms") return PostprocMode::kNms;
  if (name == "topk") return PostprocMode::kTopk;
  throw std::invalid_argument("unknown postprocessing mode: " + name);
}

const char* postproc_mode_name(PostprocMode m) {
  return m == PostprocMode::kNms ? "nms" : "topk";
}

namespace {

det::DetectorConfig branch_config(const ModelConfig& cfg, det::Modality m) {
  det::DetectorConfig out = cfg.detector;
  out.modality = m;
  return out;
}

}  // namespace

MdqfModel::MdqfModel(const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      rgb_(branch_config(cfg, det::Modality::kRgb), rng),
      tir_(branch_config(cfg, det::Modality::kTir), rng) {
  for (long i = 0; i < cfg.detector.stages; ++i)
    adapters_.emplace_back(cfg.detector.dim, cfg.fusion.adapter_hidden, rng);
}

det::BranchDetector& MdqfModel::branch(det::Modality m) {
  return m == det::Modality::kRgb ? rgb_ : tir_;
}

fus::AdapterPair& MdqfModel::adapters(long stage) {
  return adapters_.at(static_cast<size_t>(stage));
}

void MdqfModel::set_fusion_k(long k_train, long k_test) {
  if (k_train < 0 || k_test < 0) throw std::invalid_argument("fusion k must be nonnegative");
  cfg_.fusion.k_train = k_train;
  cfg_.fusion.k_test = k_test;
}

FusedForward MdqfModel::forward_fused(const img::Image& rgb, const img::Image& tir,
                                      bool training) {
  const long n = cfg_.detector.num_queries;
  const long k = cfg_.fusion.resolve_k(training ? cfg_.fusion.k_train : cfg_.fusion.k_test, n);

  det::EncoderMemory mem_rgb = rgb_.extract_memory(rgb);
  det::EncoderMemory mem_tir = tir_.extract_memory(tir);
  det::StageOutput prev_rgb = rgb_.init_queries();
  det::StageOutput prev_tir = tir_.init_queries();

  FusedForward out;
  for (long i = 0; i < cfg_.detector.stages; ++i) {
    fus::FusedState f =
        fus::fuse(prev_rgb.proposals, prev_tir.proposals, prev_rgb.queries.vectors,
                  prev_tir.queries.vectors, adapters_[static_cast<size_t>(i)], k);

    det::QuerySet qr = rgb_.decode_layer(i, mem_rgb, {f.queries_rgb}, f.proposals);
    det::ProposalSet pr = rgb_.predict_head(i, qr, f.proposals);
    det::QuerySet qt = tir_.decode_layer(i, mem_tir, {f.queries_tir}, f.proposals);
    det::ProposalSet pt = tir_.predict_head(i, qt, f.proposals);

    out.rgb.push_back({qr, pr});
    out.tir.push_back({qt, pt});
    out.fused.push_back(std::move(f));
    prev_rgb = out.rgb.back();
    prev_tir = out.tir.back();
  }
  return out;
}

std::vector<det::StageOutput> MdqfModel::forward_missing(det::Modality m,
                                                         const img::Image& image) {
  return branch(m).forward_single(image);
}

void MdqfModel::visit_params(const nn::ParamVisitor& fn) {
  rgb_.visit_params([&](const std::string& name, ad::Tensor& t) { fn("rgb." + name, t); });
  tir_.visit_params([&](const std::string& name, ad::Tensor& t) { fn("tir." + name, t); });
  visit_adapters(fn);
}

void MdqfModel::visit_adapters(const nn::ParamVisitor& fn) {
  for (size_t i = 0; i < adapters_.size(); ++i)
    adapters_[i].visit("fusion.s" + std::to_string(i), fn);
}

namespace {

void collect(const det::ProposalSet& set, det::Modality origin, double floor,
             std::vector<geom::ScoredBox>& boxes, std::vector<det::Modality>& origins) {
  const ad::Matrix& b = set.boxes.value();
  const ad::Matrix& logits = set.class_logits.value();
  const ad::Matrix& s = set.scores.value();
  for (long r = 0; r < b.rows(); ++r) {
    const double score = s(r, 0);
    if (score < floor) continue;
    long best = 0;
    logits.row(r).maxCoeff(&best);
    geom::ScoredBox sb;
    sb.box = geom::BBox{b(r, 0), b(r, 1), b(r, 2), b(r, 3)};
    sb.class_id = static_cast<int>(best);
    sb.score = score;
    boxes.push_back(sb);
    origins.push_back(origin);
  }
}

std::vector<Detection> finalize(const std::vector<geom::ScoredBox>& boxes,
                                const std::vector<det::Modality>& origins,
                                const PostprocConfig& cfg) {
  std::vector<int> keep;
  if (cfg.mode == PostprocMode::kNms) {
    keep = geom::nms(boxes, cfg.nms_iou, /*class_aware=*/true);
  } else {
    keep.resize(boxes.size());
    std::iota(keep.begin(), keep.end(), 0);
    std::stable_sort(keep.begin(), keep.end(),
                     [&](int a, int b) { return boxes[a].score > boxes[b].score; });
    if (static_cast<long>(keep.size()) > cfg.topk) keep.resize(static_cast<size_t>(cfg.topk));
  }
  std::vector<Detection> out;
  out.reserve(keep.size());
  for (int idx : keep)
    out.push_back({boxes[idx].box, boxes[idx].class_id, boxes[idx].score, origins[idx]});
  return out;
}

}  // namespace

std::vector<Detection> postprocess(const det::ProposalSet& rgb_final,
                                   const det::ProposalSet& tir_final, const PostprocConfig& cfg) {
  std::vector<geom::ScoredBox> boxes;
  std::vector<det::Modality> origins;
  collect(rgb_final, det::Modality::kRgb, cfg.score_floor, boxes, origins);
  collect(tir_final, det::Modality::kTir, cfg.score_floor, boxes, origins);
  return finalize(boxes, origins, cfg);
}

std::vector<Detection> postprocess_single(const det::ProposalSet& final_set, det::Modality origin,
                                          const PostprocConfig& cfg) {
  std::vector<geom::ScoredBox> boxes;
  std::vector<det::Modality> origins;
  collect(final_set, origin, cfg.score_floor, boxes, origins);
  return finalize(boxes, origins, cfg);
}

img::Image mean_image(const img::Image& rgb, const img::Image& tir, long channels) {
  if (rgb.height() != tir.height() || rgb.width() != tir.width())
    throw std::invalid_argument("mean_image: image sizes differ");
  img::Image mean = img::Image::zeros(channels, rgb.height(), rgb.width());
  for (long c = 0; c < channels; ++c) {
    // Broadcast a single-plane input across the requested channels.
    const img::Plane& a = rgb.planes[static_cast<size_t>(c % rgb.channels())];
    const img::Plane& b = tir.planes[static_cast<size_t>(c % tir.channels())];
    mean.planes[static_cast<size_t>(c)] = 0.5 * (a + b);
  }
  return mean;
}

std::vector<Detection> baseline_image_fusion(det::BranchDetector& detector, const img::Image& rgb,
                                             const img::Image& tir, const PostprocConfig& cfg) {
  img::Image mean = mean_image(rgb, tir, detector.config().channels());

  ad::NoGradGuard ng;
  auto stages = detector.forward_single(mean);
  // Origin tag is nominal: the averaged image has no single source modality.
  return postprocess_single(stages.back().proposals, detector.config().modality, cfg);
}

std::vector<Detection> baseline_box_fusion(det::BranchDetector& rgb_detector,
                                           det::BranchDetector& tir_detector,
                                           const img::Image& rgb, const img::Image& tir,
                                           const PostprocConfig& cfg) {
  ad::NoGradGuard ng;
  auto rgb_stages = rgb_detector.forward_single(rgb);
  auto tir_stages = tir_detector.forward_single(tir);
  return postprocess(rgb_stages.back().proposals, tir_stages.back().proposals, cfg);
}

}  // namespace mdqf::mdl
