#include "mdqf/run_config.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace mdqf::cli {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& scope,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config section is not an object: " + scope);
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown config key: " + (scope.empty() ? it.key() : scope + "." + it.key()));
  }
}

template <typename T>
void read_field(const json& obj, const std::string& scope, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("wrong type for config key: " + (scope.empty() ? key : scope + "." + key));
  }
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config_text(const std::string& json_text) {
  json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) throw ConfigError("config is not valid JSON");
  check_keys(root, "", {"schema_version", "seed", "data", "model", "train", "postproc"});

  RunConfig c;
  read_field(root, "", "schema_version", c.schema_version);
  if (c.schema_version != 1)
    throw ConfigError("unsupported schema_version: " + std::to_string(c.schema_version));
  read_field(root, "", "seed", c.seed);

  if (root.contains("data")) {
    const json& d = root.at("data");
    check_keys(d, "data",
               {"image_h", "image_w", "min_objects", "max_objects", "num_classes", "p_rgb_only",
                "p_tir_only", "p_both", "noise", "train_pairs", "test_pairs"});
    read_field(d, "data", "image_h", c.scene.image_h);
    read_field(d, "data", "image_w", c.scene.image_w);
    read_field(d, "data", "min_objects", c.scene.min_objects);
    read_field(d, "data", "max_objects", c.scene.max_objects);
    read_field(d, "data", "num_classes", c.scene.num_classes);
    read_field(d, "data", "p_rgb_only", c.scene.p_rgb_only);
    read_field(d, "data", "p_tir_only", c.scene.p_tir_only);
    read_field(d, "data", "p_both", c.scene.p_both);
    read_field(d, "data", "noise", c.scene.noise);
    read_field(d, "data", "train_pairs", c.train_pairs);
    read_field(d, "data", "test_pairs", c.test_pairs);
  }

  if (root.contains("model")) {
    const json& m = root.at("model");
    check_keys(m, "model",
               {"dim", "patch", "heads", "ffn_hidden", "encoder_blocks", "stages", "num_queries",
                "num_classes", "adapter_hidden", "k1", "k2"});
    read_field(m, "model", "dim", c.model.detector.dim);
    read_field(m, "model", "patch", c.model.detector.patch);
    read_field(m, "model", "heads", c.model.detector.heads);
    read_field(m, "model", "ffn_hidden", c.model.detector.ffn_hidden);
    read_field(m, "model", "encoder_blocks", c.model.detector.encoder_blocks);
    read_field(m, "model", "stages", c.model.detector.stages);
    read_field(m, "model", "num_queries", c.model.detector.num_queries);
    read_field(m, "model", "num_classes", c.model.detector.num_classes);
    read_field(m, "model", "adapter_hidden", c.model.fusion.adapter_hidden);
    read_field(m, "model", "k1", c.model.fusion.k_train);
    read_field(m, "model", "k2", c.model.fusion.k_test);
  }

  if (root.contains("train")) {
    const json& t = root.at("train");
    check_keys(t, "train",
               {"separate_steps", "joint_steps", "finetune_steps", "rounds", "batch_size", "lr",
                "weight_decay", "warmup_steps", "lr_floor", "alpha", "beta", "gamma",
                "pos_weight"});
    read_field(t, "train", "separate_steps", c.separate_steps);
    read_field(t, "train", "joint_steps", c.joint_steps);
    read_field(t, "train", "finetune_steps", c.finetune_steps);
    read_field(t, "train", "rounds", c.rounds);
    read_field(t, "train", "batch_size", c.batch_size);
    read_field(t, "train", "lr", c.lr);
    read_field(t, "train", "weight_decay", c.weight_decay);
    read_field(t, "train", "warmup_steps", c.warmup_steps);
    read_field(t, "train", "lr_floor", c.lr_floor);
    read_field(t, "train", "alpha", c.weights.alpha);
    read_field(t, "train", "beta", c.weights.beta);
    read_field(t, "train", "gamma", c.weights.gamma);
    read_field(t, "train", "pos_weight", c.weights.pos_weight);
  }

  if (root.contains("postproc")) {
    const json& p = root.at("postproc");
    check_keys(p, "postproc", {"mode", "nms_iou", "topk", "score_floor"});
    if (p.contains("mode")) {
      std::string mode;
      read_field(p, "postproc", "mode", mode);
      try {
        c.postproc.mode = mdl::postproc_mode_from_name(mode);
      } catch (const std::exception&) {
        throw ConfigError("unknown postproc.mode: " + mode);
      }
    }
    read_field(p, "postproc", "nms_iou", c.postproc.nms_iou);
    read_field(p, "postproc", "topk", c.postproc.topk);
    read_field(p, "postproc", "score_floor", c.postproc.score_floor);
  }

  c.scene.seed = c.seed;
  c.model.detector.image_h = c.scene.image_h;
  c.model.detector.image_w = c.scene.image_w;
  return c;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

std::string effective_config_json(const RunConfig& c) {
  json root{
      {"schema_version", c.schema_version},
      {"seed", c.seed},
      {"data",
       {{"image_h", c.scene.image_h},
        {"image_w", c.scene.image_w},
        {"min_objects", c.scene.min_objects},
        {"max_objects", c.scene.max_objects},
        {"num_classes", c.scene.num_classes},
        {"p_rgb_only", c.scene.p_rgb_only},
        {"p_tir_only", c.scene.p_tir_only},
        {"p_both", c.scene.p_both},
        {"noise", c.scene.noise},
        {"train_pairs", c.train_pairs},
        {"test_pairs", c.test_pairs}}},
      {"model",
       {{"dim", c.model.detector.dim},
        {"patch", c.model.detector.patch},
        {"heads", c.model.detector.heads},
        {"ffn_hidden", c.model.detector.ffn_hidden},
        {"encoder_blocks", c.model.detector.encoder_blocks},
        {"stages", c.model.detector.stages},
        {"num_queries", c.model.detector.num_queries},
        {"num_classes", c.model.detector.num_classes},
        {"adapter_hidden", c.model.fusion.adapter_hidden},
        {"k1", c.model.fusion.k_train},
        {"k2", c.model.fusion.k_test}}},
      {"train",
       {{"separate_steps", c.separate_steps},
        {"joint_steps", c.joint_steps},
        {"finetune_steps", c.finetune_steps},
        {"rounds", c.rounds},
        {"batch_size", c.batch_size},
        {"lr", c.lr},
        {"weight_decay", c.weight_decay},
        {"warmup_steps", c.warmup_steps},
        {"lr_floor", c.lr_floor},
        {"alpha", c.weights.alpha},
        {"beta", c.weights.beta},
        {"gamma", c.weights.gamma},
        {"pos_weight", c.weights.pos_weight}}},
      {"postproc",
       {{"mode", mdl::postproc_mode_name(c.postproc.mode)},
        {"nms_iou", c.postproc.nms_iou},
        {"topk", c.postproc.topk},
        {"score_floor", c.postproc.score_floor}}}};
  return root.dump(2) + "\n";
}

train::TrainConfig phase_config(const RunConfig& c, long max_steps, unsigned long long seed,
                                const std::string& tag, const std::string& log_path) {
  train::TrainConfig t;
  t.epochs = max_steps > 0 ? max_steps : 1;  // one batch per epoch at worst
  t.max_steps = max_steps;
  t.batch_size = c.batch_size;
  t.lr = c.lr;
  t.weight_decay = c.weight_decay;
  t.warmup_steps = c.warmup_steps;
  t.lr_floor = c.lr_floor;
  t.seed = seed;
  t.weights = c.weights;
  t.log_path = log_path;
  t.phase_tag = tag;
  return t;
}

std::string sha256_bytes(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_bytes(bytes);
}

std::string write_manifest(const RunManifest& m, const std::string& dir) {
  json inputs = json::object(), outputs = json::object();
  for (const auto& [path, hash] : m.inputs) inputs[path] = hash;
  for (const auto& [path, hash] : m.outputs) outputs[path] = hash;

  json config = json::parse(m.config_json, nullptr, false);
  if (config.is_discarded()) config = m.config_json;  // keep opaque text if not JSON

  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());

  json root{{"command", m.command},  {"argv", m.argv},       {"seed", m.seed},
            {"config", config},      {"inputs", inputs},     {"outputs", outputs},
            {"written_unix", secs.count()}};

  std::filesystem::create_directories(dir);
  const auto path = (std::filesystem::path(dir) / "manifest.json").string();
  std::ofstream out(path, std::ios::trunc);
  out << root.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  return path;
}

}  // namespace mdqf::cli
