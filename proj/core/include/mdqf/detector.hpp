#pragma once

#include <string>
#include <vector>

#include "mdqf/ad.hpp"
#include "mdqf/image.hpp"
#include "mdqf/nn.hpp"
#include "mdqf/rng.hpp"

// One single-modality detector: patch-embedding encoder producing a token
// memory, a stack of decoder layers refining N learned queries, and unshared
// per-stage prediction heads. Each stage emits (queries, proposals) and feeds
// the next stage. The whole rollout is differentiable, including box
// positional conditioning, so analytic gradients agree with finite
// differences for every parameter.

namespace mdqf::det {

using ad::Matrix;
using ad::Tensor;
using ad::Var;
using nn::ParamVisitor;

enum class Modality { kRgb, kTir };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

struct DetectorConfig {
  Modality modality = Modality::kRgb;
  long image_h = 64;
  long image_w = 64;
  long patch = 8;
  long dim = 64;
  long heads = 4;
  long ffn_hidden = 128;
  long encoder_blocks = 2;
  long stages = 6;
  long num_queries = 20;
  long num_classes = 3;
  long channels_override = 0;  // 0 = derive from modality

  long channels() const {
    if (channels_override > 0) return channels_override;
    return modality == Modality::kRgb ? 3 : 1;
  }
  long tokens() const { return (image_h / patch) * (image_w / patch); }
};

struct EncoderMemory {
  Var features;  // (T, d)
  Matrix pos;    // (T, d), fixed grid encoding
};

struct QuerySet {
  Var vectors;  // (N, d)
};

struct ProposalSet {
  Var boxes;         // (N, 4) normalized cxcywh in [0,1]
  Var class_logits;  // (N, C)
  Var scores;        // (N, 1), always max class sigmoid
};

struct StageOutput {
  QuerySet queries;
  ProposalSet proposals;
};

struct EncoderBlock {
  nn::LayerNorm ln1;
  nn::MultiheadAttention attn;
  nn::LayerNorm ln2;
  nn::Mlp ffn;
};

struct DecoderLayer {
  nn::LayerNorm ln1;
  nn::MultiheadAttention self_attn;
  nn::LayerNorm ln2;
  nn::MultiheadAttention cross_attn;
  nn::LayerNorm ln3;
  nn::Mlp ffn;
};

struct PredictionHead {
  nn::Linear cls;  // d -> C
  nn::Mlp box;     // d -> d -> 4 refinement delta, zero-initialized output
};

// Derives (N,1) scores from class logits; kept with the head math so every
// ProposalSet producer shares one definition.
Var scores_from_logits(const Var& class_logits);

class BranchDetector {
 public:
  BranchDetector(const DetectorConfig& cfg, Rng& rng);

  const DetectorConfig& config() const { return cfg_; }

  EncoderMemory extract_memory(const img::Image& image);
  StageOutput init_queries();
  QuerySet decode_layer(long i, const EncoderMemory& memory, const QuerySet& queries,
                        const ProposalSet& proposals);
  ProposalSet predict_head(long i, const QuerySet& queries, const ProposalSet& prev);

  // Full per-stage rollout without fusion; result has config().stages entries.
  std::vector<StageOutput> forward_single(const img::Image& image);

  void visit_params(const ParamVisitor& fn);
  // Visits only parameters whose hierarchical name starts with prefix.
  void visit_group(const std::string& prefix, const ParamVisitor& fn);

 private:
  DetectorConfig cfg_;
  nn::Linear patch_embed_;
  std::vector<EncoderBlock> encoder_;
  nn::LayerNorm encoder_final_ln_;
  Tensor query_content_;  // (N, d)
  Tensor query_anchor_;   // (N, 4) pre-sigmoid
  std::vector<DecoderLayer> decoder_;
  nn::LayerNorm decoder_out_ln_;
  std::vector<PredictionHead> heads_;
  Matrix grid_pos_;  // (T, d)
};

}  // namespace mdqf::det
