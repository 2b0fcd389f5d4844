#pragma once

#include <stdexcept>
#include <string>

#include "mdqf/model.hpp"

// Parameter archives. One file holds a JSON header (kind, geometry, array
// index) followed by raw float64 payloads in header order; round trips are
// bit-exact. Branch archives stand alone so a composite model can adopt a
// separately trained branch without touching any other parameter byte.

namespace mdqf::ckpt {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

struct CheckpointInfo {
  std::string kind;      // "branch" or "composite"
  std::string modality;  // branch archives only, otherwise empty
};

// Reads only the header; throws CheckpointError on bad magic or version.
CheckpointInfo inspect(const std::string& path);

// Reconstructs construction configs from archive headers, so a consumer can
// build a matching model without the original config file.
mdl::ModelConfig read_model_config(const std::string& path);
det::DetectorConfig read_branch_config(const std::string& path);

void save_branch(det::BranchDetector& branch, const std::string& path);
// Target geometry and modality must match the archive exactly.
void load_branch(det::BranchDetector& branch, const std::string& path);

void save_model(mdl::MdqfModel& model, const std::string& path);
// Restores all parameters plus the archived k_train/k_test.
void load_model(mdl::MdqfModel& model, const std::string& path);

// Adopts a standalone branch archive into one slot of a composite; the other
// branch and the adapters keep every byte.
void load_branch_into_model(mdl::MdqfModel& model, det::Modality target, const std::string& path);
// Writes one branch of a composite as a standalone branch archive.
void extract_branch(mdl::MdqfModel& model, det::Modality which, const std::string& path);

}  // namespace mdqf::ckpt
