#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mdqf/detector.hpp"
#include "mdqf/geometry.hpp"
#include "mdqf/image.hpp"

namespace mdqf::data {

enum class Visibility { kRgbOnly, kTirOnly, kBoth };

inline const char* visibility_name(Visibility v) {
  switch (v) {
    case Visibility::kRgbOnly: return "rgb-only";
    case Visibility::kTirOnly: return "tir-only";
    case Visibility::kBoth: return "both";
  }
  throw std::invalid_argument("visibility_name: bad value");
}

inline Visibility visibility_from_name(const std::string& s) {
  if (s == "rgb-only") return Visibility::kRgbOnly;
  if (s == "tir-only") return Visibility::kTirOnly;
  if (s == "both") return Visibility::kBoth;
  throw std::invalid_argument("visibility_from_name: " + s);
}

struct Annotation {
  geom::BBox box;  // normalized cxcywh
  int class_id = 0;
  Visibility visibility = Visibility::kBoth;
};

struct SingleSample {
  img::Image image;
  std::vector<geom::GtBox> gts;
};

struct PairedSample {
  img::Image rgb;
  img::Image tir;
  std::vector<Annotation> annotations;
};

// All objects count as ground truth regardless of visibility.
inline std::vector<geom::GtBox> ground_truth(const PairedSample& s) {
  std::vector<geom::GtBox> out;
  out.reserve(s.annotations.size());
  for (const Annotation& a : s.annotations) out.push_back({a.box, a.class_id});
  return out;
}

inline SingleSample to_single(const PairedSample& s, det::Modality m) {
  return {m == det::Modality::kRgb ? s.rgb : s.tir, ground_truth(s)};
}

inline bool visible_in(Visibility v, det::Modality m) {
  if (v == Visibility::kBoth) return true;
  return m == det::Modality::kRgb ? v == Visibility::kRgbOnly : v == Visibility::kTirOnly;
}

// Single-modality view carrying only the objects that render in it; the
// training target a real unpaired dataset would provide.
inline SingleSample to_single_visible(const PairedSample& s, det::Modality m) {
  SingleSample out{m == det::Modality::kRgb ? s.rgb : s.tir, {}};
  for (const Annotation& a : s.annotations) {
    if (visible_in(a.visibility, m)) out.gts.push_back({a.box, a.class_id});
  }
  return out;
}

}  // namespace mdqf::data
