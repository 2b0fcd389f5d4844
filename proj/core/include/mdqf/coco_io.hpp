#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mdqf/dataset.hpp"

namespace mdqf::coco {

class MalformedJsonError : public std::runtime_error {
 public:
  explicit MalformedJsonError(const std::string& what) : std::runtime_error(what) {}
};

class MissingImageError : public std::runtime_error {
 public:
  explicit MissingImageError(const std::string& what) : std::runtime_error(what) {}
};

class DanglingPairError : public std::runtime_error {
 public:
  explicit DanglingPairError(const std::string& what) : std::runtime_error(what) {}
};

// Writes <dir>/rgb.json and <dir>/tir.json (COCO detection layout with pixel
// [x,y,w,h] boxes and a per-annotation visibility tag), the pairing manifest
// <dir>/pairs.json, and PNGs under <dir>/images/. Image ids are shared across
// the two splits.
void export_coco(const std::vector<data::PairedSample>& samples, const std::string& dir,
                 long num_classes = 3);

std::vector<data::PairedSample> import_paired(const std::string& dir);

// visible_only drops annotations whose visibility mode excludes this
// modality; the full set is the evaluation ceiling, the visible set is the
// honest training target.
std::vector<data::SingleSample> import_single(const std::string& dir, det::Modality modality,
                                              bool visible_only = false);

}  // namespace mdqf::coco
