#include "mdqf/detector.hpp"

#include <stdexcept>

namespace mdqf::det {

const char* modality_name(Modality m) { return m == Modality::kRgb ? "rgb" : "tir"; }

Modality modality_from_name(const std::string& name) {
  if (name == "rgb") return Modality::kRgb;
  if (name == "tir") return Modality::kTir;
  throw std::invalid_argument("unknown modality: " + name);
}

Var scores_from_logits(const Var& class_logits) {
  Var probs = ad::sigmoid(class_logits);
  Var best = ad::slice_cols(probs, 0, 1);
  for (long c = 1; c < class_logits.cols(); ++c)
    best = ad::max_elem(best, ad::slice_cols(probs, c, 1));
  return best;
}

BranchDetector::BranchDetector(const DetectorConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.image_h % cfg.patch != 0 || cfg.image_w % cfg.patch != 0)
    throw std::invalid_argument("detector: image size not divisible by patch size");

  const long d = cfg.dim;
  patch_embed_ = nn::Linear(cfg.channels() * cfg.patch * cfg.patch, d, rng);
  for (long b = 0; b < cfg.encoder_blocks; ++b)
    encoder_.push_back({nn::LayerNorm(d), nn::MultiheadAttention(d, cfg.heads, rng),
                        nn::LayerNorm(d), nn::Mlp(d, cfg.ffn_hidden, d, rng)});
  encoder_final_ln_ = nn::LayerNorm(d);

  Matrix content(cfg.num_queries, d);
  for (long j = 0; j < d; ++j)
    for (long i = 0; i < cfg.num_queries; ++i) content(i, j) = rng.normal(0.0, 0.02);
  query_content_ = Tensor(std::move(content));
  Matrix anchors(cfg.num_queries, 4);
  for (long i = 0; i < cfg.num_queries; ++i) {
    // Pre-sigmoid anchors spread over the image with mid-sized boxes.
    anchors(i, 0) = rng.uniform(-1.5, 1.5);
    anchors(i, 1) = rng.uniform(-1.5, 1.5);
    anchors(i, 2) = rng.uniform(-1.8, -0.8);
    anchors(i, 3) = rng.uniform(-1.8, -0.8);
  }
  query_anchor_ = Tensor(std::move(anchors));

  for (long i = 0; i < cfg.stages; ++i) {
    decoder_.push_back({nn::LayerNorm(d), nn::MultiheadAttention(d, cfg.heads, rng),
                        nn::LayerNorm(d), nn::MultiheadAttention(d, cfg.heads, rng),
                        nn::LayerNorm(d), nn::Mlp(d, cfg.ffn_hidden, d, rng)});
  }
  decoder_out_ln_ = nn::LayerNorm(d);

  for (long i = 0; i < cfg.stages; ++i) {
    PredictionHead head;
    head.cls = nn::Linear(d, cfg.num_classes, rng);
    // Rare-positive prior keeps early scores low.
    head.cls.b.value.setConstant(-2.0);
    head.box = nn::Mlp(d, d, 4, rng);
    head.box.fc2.zero_init();
    heads_.push_back(std::move(head));
  }

  grid_pos_ = nn::sinusoidal_2d(cfg.image_h / cfg.patch, cfg.image_w / cfg.patch, d);
}

EncoderMemory BranchDetector::extract_memory(const img::Image& image) {
  if (image.height() != cfg_.image_h || image.width() != cfg_.image_w ||
      image.channels() != cfg_.channels())
    throw std::invalid_argument("extract_memory: image shape does not match detector config");

  const long p = cfg_.patch;
  const long gh = cfg_.image_h / p;
  const long gw = cfg_.image_w / p;
  Matrix patches(gh * gw, cfg_.channels() * p * p);
  for (long py = 0; py < gh; ++py) {
    for (long px = 0; px < gw; ++px) {
      const long r = py * gw + px;
      long c = 0;
      for (long ch = 0; ch < cfg_.channels(); ++ch)
        for (long dy = 0; dy < p; ++dy)
          for (long dx = 0; dx < p; ++dx)
            patches(r, c++) = image.planes[ch](py * p + dy, px * p + dx);
    }
  }

  Var x = ad::add(patch_embed_.forward(ad::constant(std::move(patches))),
                  ad::constant(grid_pos_));
  for (EncoderBlock& blk : encoder_) {
    Var t = blk.ln1.forward(x);
    x = ad::add(x, blk.attn.forward(t, t, t));
    x = ad::add(x, blk.ffn.forward(blk.ln2.forward(x)));
  }
  x = encoder_final_ln_.forward(x);
  return EncoderMemory{x, grid_pos_};
}

StageOutput BranchDetector::init_queries() {
  StageOutput out;
  out.queries.vectors = ad::param(query_content_);
  out.proposals.boxes = ad::sigmoid(ad::param(query_anchor_));
  // Stage-0 logits are a fixed floor: every query starts at near-zero score.
  out.proposals.class_logits =
      ad::constant(Matrix::Constant(cfg_.num_queries, cfg_.num_classes, -50.0));
  out.proposals.scores = scores_from_logits(out.proposals.class_logits);
  return out;
}

QuerySet BranchDetector::decode_layer(long i, const EncoderMemory& memory,
                                      const QuerySet& queries, const ProposalSet& proposals) {
  if (i < 0 || i >= cfg_.stages) throw std::out_of_range("decode_layer: bad stage index");
  DecoderLayer& layer = decoder_[static_cast<size_t>(i)];

  Var qpos = nn::box_position_encoding(proposals.boxes, cfg_.dim);
  Var mem_keys = ad::add(memory.features, ad::constant(memory.pos));

  Var x = queries.vectors;
  Var t = layer.ln1.forward(x);
  x = ad::add(x, layer.self_attn.forward(ad::add(t, qpos), ad::add(t, qpos), t));
  Var t2 = layer.ln2.forward(x);
  x = ad::add(x, layer.cross_attn.forward(ad::add(t2, qpos), mem_keys, memory.features));
  x = ad::add(x, layer.ffn.forward(layer.ln3.forward(x)));
  return QuerySet{x};
}

ProposalSet BranchDetector::predict_head(long i, const QuerySet& queries,
                                         const ProposalSet& prev) {
  if (i < 0 || i >= cfg_.stages) throw std::out_of_range("predict_head: bad stage index");
  PredictionHead& head = heads_[static_cast<size_t>(i)];

  Var t = decoder_out_ln_.forward(queries.vectors);
  ProposalSet out;
  out.class_logits = head.cls.forward(t);
  Var delta = head.box.forward(t);
  out.boxes = ad::sigmoid(ad::add(ad::logit_clamped(prev.boxes), delta));
  out.scores = scores_from_logits(out.class_logits);
  return out;
}

std::vector<StageOutput> BranchDetector::forward_single(const img::Image& image) {
  EncoderMemory memory = extract_memory(image);
  StageOutput prev = init_queries();
  std::vector<StageOutput> stages;
  stages.reserve(static_cast<size_t>(cfg_.stages));
  for (long i = 0; i < cfg_.stages; ++i) {
    QuerySet q = decode_layer(i, memory, prev.queries, prev.proposals);
    ProposalSet p = predict_head(i, q, prev.proposals);
    stages.push_back({q, p});
    prev = stages.back();
  }
  return stages;
}

void BranchDetector::visit_params(const ParamVisitor& fn) {
  patch_embed_.visit("backbone.patch", fn);
  for (size_t b = 0; b < encoder_.size(); ++b) {
    const std::string p = "encoder.b" + std::to_string(b);
    encoder_[b].ln1.visit(p + ".ln1", fn);
    encoder_[b].attn.visit(p + ".attn", fn);
    encoder_[b].ln2.visit(p + ".ln2", fn);
    encoder_[b].ffn.visit(p + ".ffn", fn);
  }
  encoder_final_ln_.visit("encoder.final_ln", fn);
  fn("queries.content", query_content_);
  fn("queries.anchor", query_anchor_);
  for (size_t i = 0; i < decoder_.size(); ++i) {
    const std::string p = "decoder.l" + std::to_string(i);
    decoder_[i].ln1.visit(p + ".ln1", fn);
    decoder_[i].self_attn.visit(p + ".self", fn);
    decoder_[i].ln2.visit(p + ".ln2", fn);
    decoder_[i].cross_attn.visit(p + ".cross", fn);
    decoder_[i].ln3.visit(p + ".ln3", fn);
    decoder_[i].ffn.visit(p + ".ffn", fn);
  }
  decoder_out_ln_.visit("decoder.out_ln", fn);
  for (size_t i = 0; i < heads_.size(); ++i) {
    const std::string p = "heads.h" + std::to_string(i);
    heads_[i].cls.visit(p + ".cls", fn);
    heads_[i].box.visit(p + ".box", fn);
  }
}

void BranchDetector::visit_group(const std::string& prefix, const ParamVisitor& fn) {
  visit_params([&](const std::string& name, Tensor& t) {
    if (name.rfind(prefix, 0) == 0) fn(name, t);
  });
}

}  // namespace mdqf::det
