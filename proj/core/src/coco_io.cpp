#include "mdqf/coco_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "mdqf/image.hpp"

namespace mdqf::coco {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const char* kClassNames[3] = {"disk", "square", "triangle"};

std::string image_file(const char* mod, long id) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "images/%s_%06ld.png", mod, id);
  return buf;
}

json annotations_json(const std::vector<data::PairedSample>& samples) {
  json anns = json::array();
  long ann_id = 1;
  for (size_t i = 0; i < samples.size(); ++i) {
    const data::PairedSample& s = samples[i];
    const double w = static_cast<double>(s.rgb.width());
    const double h = static_cast<double>(s.rgb.height());
    for (const data::Annotation& a : s.annotations) {
      const double bw = a.box.w * w;
      const double bh = a.box.h * h;
      anns.push_back({{"id", ann_id++},
                      {"image_id", static_cast<long>(i) + 1},
                      {"category_id", a.class_id + 1},
                      {"bbox", {(a.box.cx - a.box.w / 2) * w, (a.box.cy - a.box.h / 2) * h, bw, bh}},
                      {"area", bw * bh},
                      {"iscrowd", 0},
                      {"visibility", data::visibility_name(a.visibility)}});
    }
  }
  return anns;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out.is_open()) throw std::runtime_error("export_coco: cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw MalformedJsonError("cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw MalformedJsonError("invalid JSON in " + path.string());
  return j;
}

struct SplitImage {
  std::string file;
  double width = 0.0;
  double height = 0.0;
};

struct Split {
  std::map<long, SplitImage> images;                      // by image id
  std::map<long, std::vector<data::Annotation>> objects;  // by image id
  std::vector<long> order;                                 // array order of image ids
};

Split load_split(const fs::path& path) {
  json j = load_json(path);
  for (const char* key : {"images", "annotations", "categories"}) {
    if (!j.contains(key) || !j[key].is_array()) {
      throw MalformedJsonError(path.string() + ": missing \"" + key + "\" array");
    }
  }
  Split split;
  try {
    for (const json& im : j["images"]) {
      const long id = im.at("id").get<long>();
      split.images[id] = {im.at("file_name").get<std::string>(), im.at("width").get<double>(),
                          im.at("height").get<double>()};
      split.order.push_back(id);
    }
    for (const json& an : j["annotations"]) {
      const long id = an.at("image_id").get<long>();
      const SplitImage& im = split.images.at(id);
      const auto& bb = an.at("bbox");
      data::Annotation a;
      a.box = {(bb.at(0).get<double>() + bb.at(2).get<double>() / 2) / im.width,
               (bb.at(1).get<double>() + bb.at(3).get<double>() / 2) / im.height,
               bb.at(2).get<double>() / im.width, bb.at(3).get<double>() / im.height};
      a.class_id = an.at("category_id").get<int>() - 1;
      a.visibility = an.contains("visibility")
                         ? data::visibility_from_name(an["visibility"].get<std::string>())
                         : data::Visibility::kBoth;
      split.objects[id].push_back(a);
    }
  } catch (const json::exception& e) {
    throw MalformedJsonError(path.string() + ": " + e.what());
  } catch (const std::out_of_range&) {
    throw MalformedJsonError(path.string() + ": annotation references unknown image id");
  }
  return split;
}

img::Image load_image_checked(const fs::path& dir, const std::string& rel) {
  const fs::path full = dir / rel;
  if (!fs::exists(full)) throw MissingImageError("missing image file " + full.string());
  return img::load_png(full.string());
}

}  // namespace

void export_coco(const std::vector<data::PairedSample>& samples, const std::string& dir,
                 long num_classes) {
  const fs::path root(dir);
  fs::create_directories(root / "images");

  json categories = json::array();
  for (long c = 0; c < num_classes; ++c) {
    categories.push_back(
        {{"id", c + 1}, {"name", c < 3 ? kClassNames[c] : ("class-" + std::to_string(c))}});
  }
  json anns = annotations_json(samples);

  json pairs = json::array();
  json rgb_images = json::array();
  json tir_images = json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    const data::PairedSample& s = samples[i];
    const long id = static_cast<long>(i) + 1;
    const std::string rgb_file = image_file("rgb", id);
    const std::string tir_file = image_file("tir", id);
    img::save_png(s.rgb, (root / rgb_file).string());
    img::save_png(s.tir, (root / tir_file).string());
    rgb_images.push_back(
        {{"id", id}, {"file_name", rgb_file}, {"width", s.rgb.width()}, {"height", s.rgb.height()}});
    tir_images.push_back(
        {{"id", id}, {"file_name", tir_file}, {"width", s.tir.width()}, {"height", s.tir.height()}});
    pairs.push_back({{"image_id", id}, {"rgb_file", rgb_file}, {"tir_file", tir_file}});
  }

  write_json({{"images", rgb_images}, {"annotations", anns}, {"categories", categories}},
             root / "rgb.json");
  write_json({{"images", tir_images}, {"annotations", anns}, {"categories", categories}},
             root / "tir.json");
  write_json(pairs, root / "pairs.json");
}

std::vector<data::PairedSample> import_paired(const std::string& dir) {
  const fs::path root(dir);
  json pairs = load_json(root / "pairs.json");
  if (!pairs.is_array()) throw MalformedJsonError("pairs.json: expected a top-level array");
  Split rgb = load_split(root / "rgb.json");
  Split tir = load_split(root / "tir.json");

  std::vector<data::PairedSample> out;
  out.reserve(pairs.size());
  for (const json& p : pairs) {
    long id = 0;
    std::string rgb_file, tir_file;
    try {
      id = p.at("image_id").get<long>();
      rgb_file = p.at("rgb_file").get<std::string>();
      tir_file = p.at("tir_file").get<std::string>();
    } catch (const json::exception& e) {
      throw MalformedJsonError(std::string("pairs.json: ") + e.what());
    }
    if (rgb.images.find(id) == rgb.images.end() || tir.images.find(id) == tir.images.end()) {
      throw DanglingPairError("pair image_id " + std::to_string(id) + " missing from a split");
    }
    if (!fs::exists(root / rgb_file) || !fs::exists(root / tir_file)) {
      throw DanglingPairError("pair image_id " + std::to_string(id) +
                              " references a missing image file");
    }
    data::PairedSample s;
    s.rgb = img::load_png((root / rgb_file).string());
    s.tir = img::load_png((root / tir_file).string());
    auto it = rgb.objects.find(id);
    if (it != rgb.objects.end()) s.annotations = it->second;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<data::SingleSample> import_single(const std::string& dir, det::Modality modality) {
  const fs::path root(dir);
  const char* name = modality == det::Modality::kRgb ? "rgb" : "tir";
  Split split = load_split(root / (std::string(name) + ".json"));

  std::vector<data::SingleSample> out;
  out.reserve(split.order.size());
  for (long id : split.order) {
    data::SingleSample s;
    s.image = load_image_checked(root, split.images.at(id).file);
    auto it = split.objects.find(id);
    if (it != split.objects.end()) {
      for (const data::Annotation& a : it->second) s.gts.push_back({a.box, a.class_id});
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mdqf::coco
