#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdqf/checkpoint.hpp"
#include "mdqf/coco_io.hpp"
#include "mdqf/datagen.hpp"
#include "mdqf/protocols.hpp"
#include "mdqf/run_config.hpp"
#include "mdqf/trainer.hpp"

namespace fs = std::filesystem;
using namespace mdqf;

namespace {

// Flag values shared by every subcommand; empty string means "not given".
struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string data_dir;
  std::string checkpoint;
  std::string modality = "rgb";
  std::string postproc;
  std::string degrade;
  long long seed = -1;
  long k1 = -1;
  long k2 = -1;
  double factor = 0.0;
  double nms_iou = -1.0;
};

void add_common_flags(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "JSON run configuration file");
  cmd->add_option("--seed", a.seed, "master seed, overrides the config file");
  cmd->add_option("--out", a.out_dir, "output directory (default $MDQF_OUT_ROOT/<command>)");
}

std::string resolve_out(const std::string& given, const std::string& leaf) {
  if (!given.empty()) return given;
  const char* root = std::getenv("MDQF_OUT_ROOT");
  return (fs::path(root != nullptr ? root : "runs") / leaf).string();
}

cli::RunConfig load_config(const CommonArgs& a) {
  cli::RunConfig c =
      a.config_path.empty() ? cli::default_config() : cli::load_config_file(a.config_path);
  if (a.seed >= 0) {
    c.seed = static_cast<unsigned long long>(a.seed);
    c.scene.seed = c.seed;
  }
  if (a.k1 >= 0) c.model.fusion.k_train = a.k1;
  if (a.k2 >= 0) c.model.fusion.k_test = a.k2;
  if (!a.postproc.empty()) c.postproc.mode = mdl::postproc_mode_from_name(a.postproc);
  if (a.nms_iou >= 0.0) c.postproc.nms_iou = a.nms_iou;
  return c;
}

cli::RunManifest start_manifest(const std::string& command, const cli::RunConfig& cfg,
                                int argc, char** argv) {
  cli::RunManifest m;
  m.command = command;
  for (int i = 0; i < argc; ++i) m.argv.emplace_back(argv[i]);
  m.seed = cfg.seed;
  m.config_json = cli::effective_config_json(cfg);
  return m;
}

void add_input(cli::RunManifest& m, const std::string& path) {
  if (!path.empty() && fs::exists(path)) m.inputs.emplace_back(path, cli::sha256_file(path));
}

void add_output(cli::RunManifest& m, const std::string& path) {
  m.outputs.emplace_back(path, cli::sha256_file(path));
}

// Every regular file under dir, sorted, so re-runs hash in a stable order.
void add_output_tree(cli::RunManifest& m, const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) add_output(m, f);
}

int finish(cli::RunManifest& m, const std::string& out_dir) {
  const std::string path = cli::write_manifest(m, out_dir);
  for (const auto& [p, hash] : m.outputs) std::cout << "wrote: " << p << "\n";
  std::cout << "manifest: " << path << "\n";
  return 0;
}

mdl::MdqfModel load_composite(const std::string& path, unsigned long long seed) {
  Rng rng(seed);
  mdl::MdqfModel model(ckpt::read_model_config(path), rng);
  ckpt::load_model(model, path);
  return model;
}

int cmd_gen_data(const CommonArgs& a, int argc, char** argv) {
  cli::RunConfig cfg = load_config(a);
  gen::validate(cfg.scene);
  const std::string out = resolve_out(a.out_dir, "gen-data");

  auto make_split = [&](const std::string& name, long count, unsigned long long seed) {
    gen::SceneSpec spec = cfg.scene;
    spec.seed = seed;
    auto samples = gen::generate_dataset(spec, count);
    coco::export_coco(samples, (fs::path(out) / name).string(), cfg.scene.num_classes);
  };
  make_split("train", cfg.train_pairs, cfg.seed);
  make_split("test", cfg.test_pairs, splitmix64(cfg.seed ^ 0x7E57ULL));

  cli::RunManifest m = start_manifest("gen-data", cfg, argc, argv);
  add_input(m, a.config_path);
  add_output_tree(m, out);
  std::cout << "train pairs: " << cfg.train_pairs << "\ntest pairs: " << cfg.test_pairs << "\n";
  return finish(m, out);
}

int cmd_train_separate(const CommonArgs& a, long steps_flag, int argc, char** argv) {
  cli::RunConfig cfg = load_config(a);
  const std::string out = resolve_out(a.out_dir, "train-separate-" + a.modality);
  const det::Modality modality = det::modality_from_name(a.modality);
  const long steps = steps_flag > 0 ? steps_flag : cfg.separate_steps;

  auto dataset = coco::import_single(a.data_dir, modality);
  if (dataset.empty()) throw std::runtime_error("no samples in " + a.data_dir);

  auto bcfg = cfg.model.detector;
  bcfg.modality = modality;
  Rng root(cfg.seed);
  Rng init = root.derive(modality == det::Modality::kRgb ? 10 : 11);
  det::BranchDetector branch(bcfg, init);

  fs::create_directories(out);
  const std::string log = (fs::path(out) / "train-log.jsonl").string();
  std::error_code ec;
  fs::remove(log, ec);
  auto stats = train::train_separate(
      branch, dataset,
      cli::phase_config(cfg, steps, splitmix64(cfg.seed ^ 0x5E9ULL), "separate-" + a.modality,
                        log));

  const std::string ckpt_path = (fs::path(out) / ("branch-" + a.modality + ".ckpt")).string();
  ckpt::save_branch(branch, ckpt_path);

  cli::RunManifest m = start_manifest("train-separate", cfg, argc, argv);
  add_input(m, a.config_path);
  add_input(m, (fs::path(a.data_dir) / (a.modality + ".json")).string());
  add_output(m, ckpt_path);
  add_output(m, log);
  std::cout << "steps: " << stats.steps << "\nloss: " << stats.initial_loss << " -> "
            << stats.final_loss << "\n";
  return finish(m, out);
}

int cmd_train_joint(const CommonArgs& a, const std::string& rgb_ckpt, const std::string& tir_ckpt,
                    long steps_flag, int argc, char** argv) {
  cli::RunConfig cfg = load_config(a);
  const std::string out = resolve_out(a.out_dir, "train-joint");
  for (const auto& [path, name] :
       {std::pair{rgb_ckpt, "rgb"}, std::pair{tir_ckpt, "tir"}}) {
    if (path.empty() || !fs::exists(path))
      throw std::runtime_error(std::string("joint training needs both branch checkpoints; "
                                           "missing ") +
                               name + " checkpoint");
    if (ckpt::inspect(path).kind != "branch")
      throw std::runtime_error(path + " is not a branch checkpoint");
  }
  const long steps = steps_flag > 0 ? steps_flag : cfg.joint_steps;

  auto paired = coco::import_paired(a.data_dir);
  if (paired.empty()) throw std::runtime_error("no paired samples in " + a.data_dir);

  Rng rng(cfg.seed);
  mdl::MdqfModel model(cfg.model, rng);
  ckpt::load_branch_into_model(model, det::Modality::kRgb, rgb_ckpt);
  ckpt::load_branch_into_model(model, det::Modality::kTir, tir_ckpt);

  fs::create_directories(out);
  const std::string log = (fs::path(out) / "train-log.jsonl").string();
  std::error_code ec;
  fs::remove(log, ec);
  auto stats = train::train_joint(
      model, paired, cli::phase_config(cfg, steps, splitmix64(cfg.seed ^ 0x101ULL), "joint", log));

  const std::string ckpt_path = (fs::path(out) / "model.ckpt").string();
  ckpt::save_model(model, ckpt_path);

  cli::RunManifest m = start_manifest("train-joint", cfg, argc, argv);
  add_input(m, a.config_path);
  add_input(m, rgb_ckpt);
  add_input(m, tir_ckpt);
  add_input(m, (fs::path(a.data_dir) / "pairs.json").string());
  add_output(m, ckpt_path);
  add_output(m, log);
  std::cout << "steps: " << stats.steps << "\nloss: " << stats.initial_loss << " -> "
            << stats.final_loss << "\n";
  return finish(m, out);
}

int cmd_train_loop(const CommonArgs& a, const std::string& rgb_dir, const std::string& tir_dir,
                   long rounds_flag, int argc, char** argv) {
  cli::RunConfig cfg = load_config(a);
  const std::string out = resolve_out(a.out_dir, "train-loop");
  const long rounds = rounds_flag > 0 ? rounds_flag : cfg.rounds;

  auto paired = coco::import_paired(a.data_dir);
  std::vector<data::SingleSample> rgb_singles, tir_singles;
  if (!rgb_dir.empty()) rgb_singles = coco::import_single(rgb_dir, det::Modality::kRgb);
  if (!tir_dir.empty()) tir_singles = coco::import_single(tir_dir, det::Modality::kTir);

  Rng rng(cfg.seed);
  mdl::MdqfModel model(cfg.model, rng);

  fs::create_directories(out);
  const std::string log = (fs::path(out) / "train-log.jsonl").string();
  std::error_code ec;
  fs::remove(log, ec);
  auto stats = train::separate_to_joint_loop(
      model, rgb_singles, tir_singles, paired, rounds,
      cli::phase_config(cfg, cfg.joint_steps, cfg.seed, "loop", log));

  const std::string ckpt_path = (fs::path(out) / "model.ckpt").string();
  ckpt::save_model(model, ckpt_path);

  cli::RunManifest m = start_manifest("train-loop", cfg, argc, argv);
  add_input(m, a.config_path);
  add_input(m, (fs::path(a.data_dir) / "pairs.json").string());
  add_output(m, ckpt_path);
  add_output(m, log);
  std::cout << "rounds: " << rounds << "\nlast joint loss: " << stats.initial_loss << " -> "
            << stats.final_loss << "\n";
  return finish(m, out);
}

eval::ProtocolConfig protocol_config(const cli::RunConfig& cfg) {
  eval::ProtocolConfig pc;
  pc.postproc = cfg.postproc;
  pc.num_classes = cfg.model.detector.num_classes;
  return pc;
}

int emit_table(const eval::Table& table, const std::string& out, const std::string& basename,
               cli::RunManifest& m) {
  eval::write_table(table, out, basename);
  std::cout << eval::to_markdown(table) << "\n";
  add_output(m, (fs::path(out) / (basename + ".csv")).string());
  add_output(m, (fs::path(out) / (basename + ".md")).string());
  return finish(m, out);
}

int cmd_eval_compare(const CommonArgs& a, int argc, char** argv) {
  cli::RunConfig cfg = load_config(a);
  const std::string out = resolve_out(a.out_dir, "eval-compare");
  auto model = load_composite(a.checkpoint, cfg.seed);
  if (a.k2 >= 0) model.set_fusion_k(model.config().fusion.k_train, a.k2);
  auto test_set = coco::import_paired(a.data_dir);

  eval::Table t = eval::run_fusion_comparison(model, test_set, protocol_config(cfg));
  cli::RunManifest m = start_manifest("eval-compare", cfg, argc, argv);
  add_input(m, a.config_path);
  add_input(m, a.checkpoint);
  return emit_table(t, out, "comparison", m);
}

int cmd_eval_robustness(const CommonArgs& a, const std::string& baseline_ckpt, int argc,
                        char** argv) {
  cli::RunConfig cfg = load_config(a);
  const std::string out = resolve_out(a.out_dir, "eval-robustness");
  auto model = load_composite(a.checkpoint, cfg.seed);
  auto test_set = coco::import_paired(a.data_dir);

  det::BranchDetector* baseline = nullptr;
  std::optional<det::BranchDetector> holder;
  if (!baseline_ckpt.empty()) {
    Rng rng(cfg.seed + 1);
    holder.emplace(ckpt::read_branch_config(baseline_ckpt), rng);
    ckpt::load_branch(*holder, baseline_ckpt);
    baseline = &*holder;
  }

  eval::Table t = eval::run_robustness(model, baseline, test_set, a.factor, protocol_config(cfg));
  if (!a.degrade.empty()) {
    const std::string keep = a.degrade + "-degraded";
    std::vector<std::vector<std::string>> rows;
    for (auto& row : t.rows)
      if (row[0] == "none" || row[0] == keep) rows.push_back(row);
    t.rows = rows;
  }

  cli::RunManifest m = start_manifest("eval-robustness", cfg, argc, argv);
  add_input(m, a.config_path);
  add_input(m, a.checkpoint);
  add_input(m, baseline_ckpt);
  return emit_table(t, out, "robustness", m);
}

int cmd_eval_ablate_k(const CommonArgs& a, std::vector<long> k2_values, int argc, char** argv) {
  cli::RunConfig cfg = load_config(a);
  const std::string out = resolve_out(a.out_dir, "eval-ablate-k");
  auto model = load_composite(a.checkpoint, cfg.seed);
  auto test_set = coco::import_paired(a.data_dir);

  if (k2_values.empty()) {
    const long n = model.config().detector.num_queries;
    k2_values = {std::max<long>(1, n / 2), n, 2 * n};
  }

  eval::Table t = eval::run_k_ablation(model, test_set, k2_values, protocol_config(cfg));
  cli::RunManifest m = start_manifest("eval-ablate-k", cfg, argc, argv);
  add_input(m, a.config_path);
  add_input(m, a.checkpoint);
  return emit_table(t, out, "k_ablation", m);
}

int cmd_eval_decoupled(const CommonArgs& a, const std::string& rgb_dir, const std::string& tir_dir,
                       const std::string& test_dir, std::vector<std::string> variants, int argc,
                       char** argv) {
  cli::RunConfig cfg = load_config(a);
  const std::string out = resolve_out(a.out_dir, "eval-decoupled");
  auto model = load_composite(a.checkpoint, cfg.seed);

  auto paired = coco::import_paired(a.data_dir);
  auto test_set = coco::import_paired(test_dir.empty() ? a.data_dir : test_dir);
  auto rgb_full = coco::import_single(rgb_dir, det::Modality::kRgb);
  auto tir_full = coco::import_single(tir_dir, det::Modality::kTir);

  fs::create_directories(out);
  const std::string log = (fs::path(out) / "train-log.jsonl").string();
  std::error_code ec;
  fs::remove(log, ec);

  eval::DecoupledOptions opts;
  opts.fresh_separate =
      cli::phase_config(cfg, cfg.separate_steps, splitmix64(cfg.seed ^ 0xFBEEFULL), "", log);
  opts.finetune =
      cli::phase_config(cfg, cfg.finetune_steps, splitmix64(cfg.seed ^ 0xF1EULL), "", log);
  opts.init_seed = splitmix64(cfg.seed ^ 0xDECAULL);
  if (!variants.empty()) opts.variants = variants;

  eval::Table t = eval::run_decoupled_update(model, paired, rgb_full, tir_full, test_set, opts,
                                             protocol_config(cfg));
  cli::RunManifest m = start_manifest("eval-decoupled", cfg, argc, argv);
  add_input(m, a.config_path);
  add_input(m, a.checkpoint);
  add_output(m, log);
  return emit_table(t, out, "decoupled", m);
}

int cmd_report(const CommonArgs& a, int argc, char** argv) {
  cli::RunConfig cfg = load_config(a);
  const std::string out = resolve_out(a.out_dir, "report");

  std::vector<std::string> tables;
  for (const auto& entry : fs::recursive_directory_iterator(a.data_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".md" &&
        entry.path().filename() != "report.md")
      tables.push_back(entry.path().string());
  std::sort(tables.begin(), tables.end());
  if (tables.empty()) throw std::runtime_error("no .md tables under " + a.data_dir);

  fs::create_directories(out);
  const std::string report_path = (fs::path(out) / "report.md").string();
  std::ofstream report(report_path, std::ios::trunc);
  report << "# Experiment report\n\n";
  cli::RunManifest m = start_manifest("report", cfg, argc, argv);
  for (const auto& path : tables) {
    std::ifstream in(path);
    report << std::string((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>())
           << "\n";
    add_input(m, path);
  }
  report.close();
  add_output(m, report_path);
  return finish(m, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modality-decoupled RGB-thermal detection toolkit"};
  app.require_subcommand(1);

  CommonArgs a;

  auto* gen = app.add_subcommand("gen-data", "Generate a paired synthetic dataset");
  add_common_flags(gen, a);

  auto* train = app.add_subcommand("train", "Train branches or the composite");
  train->require_subcommand(1);

  long steps_flag = 0, rounds_flag = 0;
  std::string rgb_ckpt, tir_ckpt, rgb_dir, tir_dir, test_dir, baseline_ckpt;
  std::vector<long> k2_list;
  std::vector<std::string> variants;

  auto* sep = train->add_subcommand("separate", "Train one branch on single-modality data");
  add_common_flags(sep, a);
  sep->add_option("--data", a.data_dir, "COCO dataset directory")->required();
  sep->add_option("--modality", a.modality, "rgb or tir")->check(CLI::IsMember({"rgb", "tir"}));
  sep->add_option("--steps", steps_flag, "step budget, overrides the config");

  auto* joint = train->add_subcommand("joint", "Joint fusion training from branch checkpoints");
  add_common_flags(joint, a);
  joint->add_option("--data", a.data_dir, "paired COCO dataset directory")->required();
  joint->add_option("--rgb-checkpoint", rgb_ckpt, "trained RGB branch checkpoint");
  joint->add_option("--tir-checkpoint", tir_ckpt, "trained TIR branch checkpoint");
  joint->add_option("--steps", steps_flag, "step budget, overrides the config");
  joint->add_option("--k1", a.k1, "training-time selection width");

  auto* loop = train->add_subcommand("loop", "Alternating separate/joint rounds");
  add_common_flags(loop, a);
  loop->add_option("--data", a.data_dir, "paired COCO dataset directory")->required();
  loop->add_option("--data-rgb", rgb_dir, "unpaired RGB dataset directory");
  loop->add_option("--data-tir", tir_dir, "unpaired TIR dataset directory");
  loop->add_option("--rounds", rounds_flag, "rounds, overrides the config");

  auto* ev = app.add_subcommand("eval", "Evaluation protocols");
  ev->require_subcommand(1);

  auto add_eval_flags = [&](CLI::App* cmd) {
    add_common_flags(cmd, a);
    cmd->add_option("--checkpoint", a.checkpoint, "composite model checkpoint")->required();
    cmd->add_option("--data", a.data_dir, "paired COCO dataset directory")->required();
    cmd->add_option("--postproc", a.postproc, "nms or topk")
        ->check(CLI::IsMember({"nms", "topk"}));
    cmd->add_option("--nms-iou", a.nms_iou, "NMS IoU threshold");
  };

  auto* compare = ev->add_subcommand("compare", "Single-branch versus fused table");
  add_eval_flags(compare);
  compare->add_option("--k2", a.k2, "inference-time selection width");

  auto* robust = ev->add_subcommand("robustness", "Contrast-degradation grid");
  add_eval_flags(robust);
  robust->add_option("--degrade", a.degrade, "restrict to one degraded modality")
      ->check(CLI::IsMember({"rgb", "tir"}));
  robust->add_option("--factor", a.factor, "contrast factor in [0,1], 0 erases the modality");
  robust->add_option("--baseline-checkpoint", baseline_ckpt,
                     "early-fusion baseline branch checkpoint");

  auto* ablate = ev->add_subcommand("ablate-k", "Selection-width and postprocessing sweep");
  add_eval_flags(ablate);
  ablate->add_option("--k2", k2_list, "k2 values to sweep (0 resolves to 2N)");

  auto* dec = ev->add_subcommand("decoupled", "Branch replacement protocol");
  add_eval_flags(dec);
  dec->add_option("--data-rgb", rgb_dir, "full RGB single-modality dataset")->required();
  dec->add_option("--data-tir", tir_dir, "full TIR single-modality dataset")->required();
  dec->add_option("--test-data", test_dir, "held-out paired test set");
  dec->add_option("--variants", variants, "subset of none,rgb,tir,both");

  auto* report = app.add_subcommand("report", "Bundle every table under a directory");
  add_common_flags(report, a);
  report->add_option("--data", a.data_dir, "directory holding .md tables")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(a, argc, argv);
    if (sep->parsed()) return cmd_train_separate(a, steps_flag, argc, argv);
    if (joint->parsed()) return cmd_train_joint(a, rgb_ckpt, tir_ckpt, steps_flag, argc, argv);
    if (loop->parsed()) return cmd_train_loop(a, rgb_dir, tir_dir, rounds_flag, argc, argv);
    if (compare->parsed()) return cmd_eval_compare(a, argc, argv);
    if (robust->parsed()) return cmd_eval_robustness(a, baseline_ckpt, argc, argv);
    if (ablate->parsed()) return cmd_eval_ablate_k(a, k2_list, argc, argv);
    if (dec->parsed()) return cmd_eval_decoupled(a, rgb_dir, tir_dir, test_dir, variants, argc, argv);
    if (report->parsed()) return cmd_report(a, argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command selected\n";
  return 1;
}
