#include "mdqf/protocols.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "mdqf/datagen.hpp"

namespace mdqf::eval {
namespace {

std::string fmt_points(double frac) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * frac);
  return buf;
}

std::string fmt_drop(double cur, double ref) {
  if (ref <= 0.0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f", 100.0 * (cur - ref) / ref);
  return buf;
}

std::string fmt_delta_points(double cur, double ref) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", 100.0 * (cur - ref));
  return buf;
}

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

EvalResult score(std::vector<std::vector<mdl::Detection>>& dets,
                 std::vector<std::vector<geom::GtBox>>& gts, const ProtocolConfig& pc) {
  return coco_map(dets, gts, coco_thresholds(), 100, pc.num_classes);
}

std::vector<std::string> metric_row(const std::string& system, const EvalResult& r) {
  return {system, fmt_points(r.map50), fmt_points(r.map), std::to_string(r.num_detections),
          std::to_string(r.num_gts)};
}

std::map<std::string, ad::Matrix> snapshot_prefixed(mdl::MdqfModel& m, const std::string& skip) {
  std::map<std::string, ad::Matrix> out;
  m.visit_params([&](const std::string& name, ad::Tensor& t) {
    if (skip.empty() || name.rfind(skip, 0) != 0) out[name] = t.value;
  });
  return out;
}

bool same_bits(const ad::Matrix& a, const ad::Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0;
}

void require_untouched(mdl::MdqfModel& m, const std::map<std::string, ad::Matrix>& want) {
  m.visit_params([&](const std::string& name, ad::Tensor& t) {
    auto it = want.find(name);
    if (it == want.end()) return;
    if (!same_bits(t.value, it->second))
      throw std::logic_error("branch graft touched unrelated parameter: " + name);
  });
}

}  // namespace

std::string to_csv(const Table& t) {
  std::string out;
  for (size_t i = 0; i < t.columns.size(); ++i) {
    if (i) out += ',';
    out += csv_field(t.columns[i]);
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += csv_field(row[i]);
    }
    out += '\n';
  }
  return out;
}

std::string to_markdown(const Table& t) {
  std::string out = "## " + t.title + "\n\n|";
  for (const auto& c : t.columns) out += " " + c + " |";
  out += "\n|";
  for (size_t i = 0; i < t.columns.size(); ++i) out += " --- |";
  out += '\n';
  for (const auto& row : t.rows) {
    out += '|';
    for (const auto& v : row) out += " " + v + " |";
    out += '\n';
  }
  return out;
}

void write_table(const Table& t, const std::string& dir, const std::string& basename) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir) / basename;
  std::ofstream csv(base.string() + ".csv", std::ios::trunc);
  csv << to_csv(t);
  std::ofstream md(base.string() + ".md", std::ios::trunc);
  md << to_markdown(t);
  if (!csv || !md) throw std::runtime_error("cannot write table: " + base.string());
}

EvalResult evaluate_fused(mdl::MdqfModel& model, const std::vector<data::PairedSample>& set,
                          const ProtocolConfig& pc) {
  ad::NoGradGuard ng;
  std::vector<std::vector<mdl::Detection>> dets;
  std::vector<std::vector<geom::GtBox>> gts;
  for (const auto& pair : set) {
    auto fwd = model.forward_fused(pair.rgb, pair.tir, false);
    dets.push_back(
        mdl::postprocess(fwd.rgb.back().proposals, fwd.tir.back().proposals, pc.postproc));
    gts.push_back(data::ground_truth(pair));
  }
  return score(dets, gts, pc);
}

EvalResult evaluate_missing(mdl::MdqfModel& model, det::Modality present,
                            const std::vector<data::PairedSample>& set, const ProtocolConfig& pc) {
  ad::NoGradGuard ng;
  std::vector<std::vector<mdl::Detection>> dets;
  std::vector<std::vector<geom::GtBox>> gts;
  for (const auto& pair : set) {
    const img::Image& image = present == det::Modality::kRgb ? pair.rgb : pair.tir;
    auto stages = model.forward_missing(present, image);
    dets.push_back(mdl::postprocess_single(stages.back().proposals, present, pc.postproc));
    gts.push_back(data::ground_truth(pair));
  }
  return score(dets, gts, pc);
}

EvalResult evaluate_image_baseline(det::BranchDetector& detector,
                                   const std::vector<data::PairedSample>& set,
                                   const ProtocolConfig& pc) {
  std::vector<std::vector<mdl::Detection>> dets;
  std::vector<std::vector<geom::GtBox>> gts;
  for (const auto& pair : set) {
    dets.push_back(mdl::baseline_image_fusion(detector, pair.rgb, pair.tir, pc.postproc));
    gts.push_back(data::ground_truth(pair));
  }
  return score(dets, gts, pc);
}

EvalResult evaluate_box_baseline(mdl::MdqfModel& model, const std::vector<data::PairedSample>& set,
                                 const ProtocolConfig& pc) {
  std::vector<std::vector<mdl::Detection>> dets;
  std::vector<std::vector<geom::GtBox>> gts;
  for (const auto& pair : set) {
    dets.push_back(mdl::baseline_box_fusion(model.branch(det::Modality::kRgb),
                                            model.branch(det::Modality::kTir), pair.rgb, pair.tir,
                                            pc.postproc));
    gts.push_back(data::ground_truth(pair));
  }
  return score(dets, gts, pc);
}

std::vector<data::SingleSample> mean_fused_dataset(const std::vector<data::PairedSample>& set,
                                                   long channels) {
  std::vector<data::SingleSample> out;
  out.reserve(set.size());
  for (const auto& pair : set)
    out.push_back({mdl::mean_image(pair.rgb, pair.tir, channels), data::ground_truth(pair)});
  return out;
}

std::vector<data::PairedSample> degrade_set(const std::vector<data::PairedSample>& set,
                                            det::Modality which, double factor) {
  std::vector<data::PairedSample> out = set;
  for (auto& pair : out) {
    if (which == det::Modality::kRgb)
      pair.rgb = gen::degrade_contrast(pair.rgb, factor);
    else
      pair.tir = gen::degrade_contrast(pair.tir, factor);
  }
  return out;
}

Table run_fusion_comparison(mdl::MdqfModel& model, const std::vector<data::PairedSample>& test_set,
                            const ProtocolConfig& pc) {
  Table t;
  t.title = "Fusion comparison";
  t.columns = {"system", "map50", "map", "detections", "gts"};
  t.rows.push_back(metric_row("rgb-only", evaluate_missing(model, det::Modality::kRgb, test_set, pc)));
  t.rows.push_back(metric_row("tir-only", evaluate_missing(model, det::Modality::kTir, test_set, pc)));
  t.rows.push_back(metric_row("box-fusion", evaluate_box_baseline(model, test_set, pc)));
  t.rows.push_back(metric_row("fused", evaluate_fused(model, test_set, pc)));
  return t;
}

Table run_robustness(mdl::MdqfModel& model, det::BranchDetector* image_baseline,
                     const std::vector<data::PairedSample>& test_set, double factor,
                     const ProtocolConfig& pc) {
  char factor_text[32];
  std::snprintf(factor_text, sizeof factor_text, "%.2f", factor);
  Table t;
  t.title = std::string("Degradation robustness (contrast factor ") + factor_text + ")";
  t.columns = {"scenario", "path", "map50", "map", "rel_drop_pct"};

  const auto rgb_down = degrade_set(test_set, det::Modality::kRgb, factor);
  const auto tir_down = degrade_set(test_set, det::Modality::kTir, factor);

  const EvalResult clean = evaluate_fused(model, test_set, pc);
  auto row = [&](const std::string& scenario, const std::string& path, const EvalResult& r,
                 double ref) {
    t.rows.push_back({scenario, path, fmt_points(r.map50), fmt_points(r.map),
                      fmt_drop(r.map50, ref)});
  };

  row("none", "fused", clean, clean.map50);
  row("rgb-degraded", "fused", evaluate_fused(model, rgb_down, pc), clean.map50);
  row("rgb-degraded", "tir-survivor", evaluate_missing(model, det::Modality::kTir, test_set, pc),
      clean.map50);
  row("tir-degraded", "fused", evaluate_fused(model, tir_down, pc), clean.map50);
  row("tir-degraded", "rgb-survivor", evaluate_missing(model, det::Modality::kRgb, test_set, pc),
      clean.map50);

  if (image_baseline != nullptr) {
    const EvalResult base_clean = evaluate_image_baseline(*image_baseline, test_set, pc);
    row("none", "image-baseline", base_clean, base_clean.map50);
    row("rgb-degraded", "image-baseline", evaluate_image_baseline(*image_baseline, rgb_down, pc),
        base_clean.map50);
    row("tir-degraded", "image-baseline", evaluate_image_baseline(*image_baseline, tir_down, pc),
        base_clean.map50);
  }
  return t;
}

Table run_k_ablation(mdl::MdqfModel& model, const std::vector<data::PairedSample>& test_set,
                     const std::vector<long>& k2_values, const ProtocolConfig& pc) {
  const auto saved = model.config().fusion;
  const long n = model.config().detector.num_queries;

  Table t;
  t.title = "Selection width and postprocessing ablation";
  t.columns = {"k1", "k2", "postproc", "map50", "map"};
  const std::string k1 = std::to_string(saved.resolve_k(saved.k_train, n));

  for (long k2 : k2_values) {
    model.set_fusion_k(saved.k_train, k2);
    const EvalResult r = evaluate_fused(model, test_set, pc);
    t.rows.push_back({k1, std::to_string(saved.resolve_k(k2, n)),
                      mdl::postproc_mode_name(pc.postproc.mode), fmt_points(r.map50),
                      fmt_points(r.map)});
  }

  model.set_fusion_k(saved.k_train, saved.k_test);
  const std::string k2 = std::to_string(saved.resolve_k(saved.k_test, n));
  for (auto mode : {mdl::PostprocMode::kNms, mdl::PostprocMode::kTopk}) {
    ProtocolConfig alt = pc;
    alt.postproc.mode = mode;
    const EvalResult r = evaluate_fused(model, test_set, alt);
    t.rows.push_back(
        {k1, k2, mdl::postproc_mode_name(mode), fmt_points(r.map50), fmt_points(r.map)});
  }
  return t;
}

Table run_decoupled_update(mdl::MdqfModel& initial,
                           const std::vector<data::PairedSample>& paired_subset,
                           const std::vector<data::SingleSample>& rgb_full,
                           const std::vector<data::SingleSample>& tir_full,
                           const std::vector<data::PairedSample>& test_set,
                           const DecoupledOptions& opts, const ProtocolConfig& pc) {
  const EvalResult base = evaluate_fused(initial, test_set, pc);

  bool want_rgb = false, want_tir = false;
  for (const auto& v : opts.variants) {
    if (v == "rgb" || v == "both") want_rgb = true;
    if (v == "tir" || v == "both") want_tir = true;
    if (v != "rgb" && v != "tir" && v != "both" && v != "none")
      throw std::invalid_argument("unknown decoupled variant: " + v);
  }

  Rng root(opts.init_seed);
  auto branch_cfg = [&](det::Modality m) {
    auto c = initial.config().detector;
    c.modality = m;
    return c;
  };

  Rng rng_rgb = root.derive(1), rng_tir = root.derive(2);
  det::BranchDetector fresh_rgb(branch_cfg(det::Modality::kRgb), rng_rgb);
  det::BranchDetector fresh_tir(branch_cfg(det::Modality::kTir), rng_tir);
  if (want_rgb) {
    auto cfg = opts.fresh_separate;
    cfg.phase_tag = "decoupled-fresh-rgb";
    train::train_separate(fresh_rgb, rgb_full, cfg);
  }
  if (want_tir) {
    auto cfg = opts.fresh_separate;
    cfg.phase_tag = "decoupled-fresh-tir";
    train::train_separate(fresh_tir, tir_full, cfg);
  }

  Table t;
  t.title = "Decoupled branch replacement";
  t.columns = {"configuration", "map50", "map", "delta_map50"};
  t.rows.push_back({"initial", fmt_points(base.map50), fmt_points(base.map), "+0.00"});

  for (const auto& v : opts.variants) {
    mdl::MdqfModel m = initial;
    if (v == "none") {
      const EvalResult r = evaluate_fused(m, test_set, pc);
      t.rows.push_back({"swap-none", fmt_points(r.map50), fmt_points(r.map),
                        fmt_delta_points(r.map50, base.map50)});
      continue;
    }

    std::map<std::string, ad::Matrix> untouched;
    if (v == "both") {
      untouched = snapshot_prefixed(m, "");
      for (auto it = untouched.begin(); it != untouched.end();) {
        if (it->first.rfind("fusion.", 0) == 0)
          ++it;
        else
          it = untouched.erase(it);
      }
    } else {
      untouched = snapshot_prefixed(m, v == "rgb" ? "rgb." : "tir.");
    }

    if (v == "rgb" || v == "both") m.branch(det::Modality::kRgb) = fresh_rgb;
    if (v == "tir" || v == "both") m.branch(det::Modality::kTir) = fresh_tir;
    require_untouched(m, untouched);

    auto ft = opts.finetune;
    ft.phase_tag = "decoupled-finetune-" + v;
    train::train_joint(m, paired_subset, ft);

    const EvalResult r = evaluate_fused(m, test_set, pc);
    t.rows.push_back({"swap-" + v, fmt_points(r.map50), fmt_points(r.map),
                      fmt_delta_points(r.map50, base.map50)});
  }
  return t;
}

}  // namespace mdqf::eval
