#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdqf/datagen.hpp"
#include "mdqf/model.hpp"
#include "mdqf/trainer.hpp"

// Run configuration and manifest plumbing shared by the command-line tools.
// Config files are strict: an unknown or ill-typed key fails loudly with its
// full dotted path, and the schema carries an explicit version.

namespace mdqf::cli {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
  long schema_version = 1;
  unsigned long long seed = 7;

  gen::SceneSpec scene;  // scene.seed mirrors the top-level seed
  long train_pairs = 200;
  long test_pairs = 50;

  mdl::ModelConfig model;  // detector image size mirrors the data section

  long separate_steps = 300;
  long joint_steps = 300;
  long finetune_steps = 300;
  long rounds = 1;
  long batch_size = 2;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  long warmup_steps = 0;
  double lr_floor = 1.0;
  train::LossWeights weights;

  mdl::PostprocConfig postproc;
};

RunConfig default_config();

// Strict parse of the versioned JSON schema; defaults fill absent keys.
RunConfig parse_config_text(const std::string& json_text);
RunConfig load_config_file(const std::string& path);

// Full snapshot; parsing it back reproduces the same config.
std::string effective_config_json(const RunConfig& c);

// Optimizer/loss settings from the config; budget, seed, and tags per phase.
// epochs is set high enough that max_steps always binds.
train::TrainConfig phase_config(const RunConfig& c, long max_steps, unsigned long long seed,
                                const std::string& tag, const std::string& log_path = "");

std::string sha256_bytes(const std::string& bytes);
std::string sha256_file(const std::string& path);

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  unsigned long long seed = 0;
  std::string config_json;  // effective config text
  std::vector<std::pair<std::string, std::string>> inputs;   // path, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  // path, sha256
};

// Writes <dir>/manifest.json, the single manifest of that run directory, and
// returns its path.
std::string write_manifest(const RunManifest& m, const std::string& dir);

}  // namespace mdqf::cli
