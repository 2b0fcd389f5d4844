#include "mdqf/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace mdqf::ckpt {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'D', 'Q', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct NamedParam {
  std::string name;
  ad::Tensor* tensor = nullptr;
};

std::vector<NamedParam> collect(det::BranchDetector& branch) {
  std::vector<NamedParam> out;
  branch.visit_params([&](const std::string& name, ad::Tensor& t) { out.push_back({name, &t}); });
  return out;
}

std::vector<NamedParam> collect(mdl::MdqfModel& model) {
  std::vector<NamedParam> out;
  model.visit_params([&](const std::string& name, ad::Tensor& t) { out.push_back({name, &t}); });
  return out;
}

json detector_json(const det::DetectorConfig& c) {
  return json{{"image_h", c.image_h},
              {"image_w", c.image_w},
              {"patch", c.patch},
              {"dim", c.dim},
              {"heads", c.heads},
              {"ffn_hidden", c.ffn_hidden},
              {"encoder_blocks", c.encoder_blocks},
              {"stages", c.stages},
              {"num_queries", c.num_queries},
              {"num_classes", c.num_classes},
              {"channels", c.channels()}};
}

void require_same_detector(const json& archived, const det::DetectorConfig& target) {
  const json expect = detector_json(target);
  for (auto it = expect.begin(); it != expect.end(); ++it) {
    if (!archived.contains(it.key()) || archived.at(it.key()) != it.value())
      throw CheckpointError("checkpoint geometry mismatch on field '" + it.key() + "'");
  }
}

json header_arrays(const std::vector<NamedParam>& params) {
  json arrays = json::array();
  for (const auto& p : params)
    arrays.push_back(json{{"name", p.name}, {"rows", p.tensor->value.rows()},
                          {"cols", p.tensor->value.cols()}});
  return arrays;
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("checkpoint truncated");
  return v;
}

void write_archive(const std::string& path, const json& header,
                   const std::vector<NamedParam>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  const std::string text = header.dump();
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    const auto& m = p.tensor->value;
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
  }
  if (!out) throw CheckpointError("write failed: " + path);
}

json read_header(std::istream& in, const std::string& path) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file: " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("checkpoint truncated");
  json header = json::parse(text, nullptr, false);
  if (header.is_discarded()) throw CheckpointError("corrupt checkpoint header");
  return header;
}

// Archive order drives the read; the target must offer exactly the same
// names and shapes, matched by name.
void read_payload(std::istream& in, const json& header, std::vector<NamedParam> params) {
  if (!header.contains("arrays") || !header.at("arrays").is_array())
    throw CheckpointError("checkpoint header lacks array index");
  const auto& arrays = header.at("arrays");
  if (arrays.size() != params.size())
    throw CheckpointError("checkpoint holds " + std::to_string(arrays.size()) +
                          " arrays, target has " + std::to_string(params.size()));
  for (const auto& entry : arrays) {
    const std::string name = entry.at("name").get<std::string>();
    NamedParam* match = nullptr;
    for (auto& p : params)
      if (p.tensor != nullptr && p.name == name) {
        match = &p;
        break;
      }
    if (match == nullptr) throw CheckpointError("checkpoint array has no target: " + name);
    auto& m = match->tensor->value;
    if (m.rows() != entry.at("rows").get<long>() || m.cols() != entry.at("cols").get<long>())
      throw CheckpointError("shape mismatch for array: " + name);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
    if (!in) throw CheckpointError("checkpoint truncated");
    match->tensor->grad.setZero();
    match->tensor = nullptr;
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw CheckpointError("checkpoint has trailing bytes");
}

std::ifstream open_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  return in;
}

void require_kind(const json& header, const std::string& kind) {
  if (!header.contains("kind") || header.at("kind") != kind)
    throw CheckpointError("expected a " + kind + " checkpoint");
}

}  // namespace

CheckpointInfo inspect(const std::string& path) {
  std::ifstream in = open_archive(path);
  const json header = read_header(in, path);
  CheckpointInfo info;
  info.kind = header.value("kind", "");
  info.modality = header.value("modality", "");
  return info;
}

namespace {

det::DetectorConfig detector_from_json(const json& d) {
  det::DetectorConfig c;
  try {
    c.image_h = d.at("image_h").get<long>();
    c.image_w = d.at("image_w").get<long>();
    c.patch = d.at("patch").get<long>();
    c.dim = d.at("dim").get<long>();
    c.heads = d.at("heads").get<long>();
    c.ffn_hidden = d.at("ffn_hidden").get<long>();
    c.encoder_blocks = d.at("encoder_blocks").get<long>();
    c.stages = d.at("stages").get<long>();
    c.num_queries = d.at("num_queries").get<long>();
    c.num_classes = d.at("num_classes").get<long>();
    if (d.at("channels").get<long>() != c.channels())
      c.channels_override = d.at("channels").get<long>();
  } catch (const json::exception&) {
    throw CheckpointError("checkpoint header misses detector fields");
  }
  return c;
}

}  // namespace

mdl::ModelConfig read_model_config(const std::string& path) {
  std::ifstream in = open_archive(path);
  const json header = read_header(in, path);
  require_kind(header, "composite");
  mdl::ModelConfig cfg;
  cfg.detector = detector_from_json(header.at("detector"));
  try {
    const json& f = header.at("fusion");
    cfg.fusion.k_train = f.at("k_train").get<long>();
    cfg.fusion.k_test = f.at("k_test").get<long>();
    cfg.fusion.adapter_hidden = f.at("adapter_hidden").get<long>();
  } catch (const json::exception&) {
    throw CheckpointError("checkpoint header misses fusion fields");
  }
  return cfg;
}

det::DetectorConfig read_branch_config(const std::string& path) {
  std::ifstream in = open_archive(path);
  const json header = read_header(in, path);
  require_kind(header, "branch");
  det::DetectorConfig cfg = detector_from_json(header.at("detector"));
  cfg.modality = det::modality_from_name(header.at("modality").get<std::string>());
  if (header.at("detector").at("channels").get<long>() == cfg.channels())
    cfg.channels_override = 0;
  else
    cfg.channels_override = header.at("detector").at("channels").get<long>();
  return cfg;
}

void save_branch(det::BranchDetector& branch, const std::string& path) {
  const auto params = collect(branch);
  json header{{"kind", "branch"},
              {"modality", det::modality_name(branch.config().modality)},
              {"detector", detector_json(branch.config())},
              {"arrays", header_arrays(params)}};
  write_archive(path, header, params);
}

void load_branch(det::BranchDetector& branch, const std::string& path) {
  std::ifstream in = open_archive(path);
  const json header = read_header(in, path);
  require_kind(header, "branch");
  if (header.at("modality") != det::modality_name(branch.config().modality))
    throw CheckpointError("checkpoint modality '" + header.at("modality").get<std::string>() +
                          "' does not match target '" +
                          det::modality_name(branch.config().modality) + "'");
  require_same_detector(header.at("detector"), branch.config());
  read_payload(in, header, collect(branch));
}

void save_model(mdl::MdqfModel& model, const std::string& path) {
  const auto params = collect(model);
  const auto& cfg = model.config();
  json header{{"kind", "composite"},
              {"detector", detector_json(cfg.detector)},
              {"fusion", json{{"k_train", cfg.fusion.k_train},
                              {"k_test", cfg.fusion.k_test},
                              {"adapter_hidden", cfg.fusion.adapter_hidden}}},
              {"arrays", header_arrays(params)}};
  write_archive(path, header, params);
}

void load_model(mdl::MdqfModel& model, const std::string& path) {
  std::ifstream in = open_archive(path);
  const json header = read_header(in, path);
  require_kind(header, "composite");
  require_same_detector(header.at("detector"), model.config().detector);
  const json& fusion = header.at("fusion");
  if (fusion.at("adapter_hidden").get<long>() != model.config().fusion.adapter_hidden)
    throw CheckpointError("checkpoint geometry mismatch on field 'adapter_hidden'");
  read_payload(in, header, collect(model));
  model.set_fusion_k(fusion.at("k_train").get<long>(), fusion.at("k_test").get<long>());
}

void load_branch_into_model(mdl::MdqfModel& model, det::Modality target, const std::string& path) {
  load_branch(model.branch(target), path);
}

void extract_branch(mdl::MdqfModel& model, det::Modality which, const std::string& path) {
  save_branch(model.branch(which), path);
}

}  // namespace mdqf::ckpt
