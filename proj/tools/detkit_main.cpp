// Copyright 2026 The detkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// detkit: synthetic detection experiments from the command line.
//
//   detkit [--config cfg.json] [--seed N] <gen|fit|nms|eval|rf|report> ...
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "detkit/anchors.hpp"
#include "detkit/error.hpp"
#include "detkit/eval.hpp"
#include "detkit/harness.hpp"
#include "detkit/io.hpp"
#include "detkit/losses.hpp"
#include "detkit/nms.hpp"
#include "detkit/plot.hpp"
#include "detkit/rfcalc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitInternal = 1;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

detkit::ScenarioConfig load_config(const GlobalOptions& g) {
  detkit::ScenarioConfig cfg;
  if (!g.config_path.empty()) cfg = detkit::parse_config_json(detkit::read_file(g.config_path));
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  return cfg;
}

fs::path prepare_dir(const std::string& out, const detkit::ScenarioConfig& cfg) {
  const fs::path dir = out.empty() ? fs::path(cfg.output_dir) : fs::path(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw detkit::ConfigError("cannot create output directory " + dir.string());
  }
  return dir;
}

void put(const fs::path& path, const std::string& contents) {
  try {
    detkit::write_file_atomic(path, contents);
  } catch (const std::runtime_error& e) {
    throw detkit::ConfigError(e.what());
  }
}

std::string threshold_tag(double t) { return "t" + detkit::format_double(t); }

json trace_point_json(const detkit::LossTracePoint& p) {
  return {{"epoch", p.epoch}, {"total", p.total}, {"cls", p.cls}, {"reg", p.reg}, {"iou", p.iou}};
}

std::vector<detkit::ScatterPoint> trace_points(const std::vector<detkit::LossTracePoint>& trace) {
  std::vector<detkit::ScatterPoint> pts;
  for (const auto& p : trace) pts.push_back({static_cast<double>(p.epoch), p.total});
  return pts;
}

void emit_histograms(const fs::path& dir, const std::string& stem,
                     const std::vector<detkit::HistogramSnapshot>& snaps) {
  put(dir / (stem + ".csv"), detkit::histograms_csv(snaps));
  for (const auto& s : snaps) {
    put(dir / (stem + "_epoch" + std::to_string(s.epoch) + ".svg"),
        detkit::histogram_svg(s.histogram, {"IOU_tar at epoch " + std::to_string(s.epoch), "IOU_tar", "positives"}));
  }
}

int cmd_gen(const GlobalOptions& g, const std::string& out, bool with_anchors) {
  const auto cfg = load_config(g);
  const auto sc = detkit::generate_scenario(cfg);
  const auto dir = prepare_dir(out, cfg);

  const auto loss = detkit::total_loss(sc.anchors, sc.matches, sc.heads, sc.gt_boxes, sc.gt_classes, cfg.losses);
  const auto cand = detkit::extract_detections(sc, sc.heads, detkit::ScoreMode::kStandard);
  const std::size_t n = sc.anchors.size();
  const std::size_t neg = sc.matches.num_negative();

  put(dir / "config.json", detkit::config_to_json(cfg));
  put(dir / "gt.json", detkit::ground_truth_to_json(sc.ground_truth()));
  put(dir / "detections.csv", detkit::detections_to_csv(cand.dets));
  const auto hist = detkit::Histogram::build(loss.positive_iou_tar, static_cast<std::size_t>(cfg.fit.histogram_bins));
  emit_histograms(dir, "iou_tar_hist", {{0, hist}});
  json summary = {{"images", sc.images.size()},
                  {"anchors_per_image", sc.anchors_per_image},
                  {"anchors", n},
                  {"objects", sc.gt_boxes.size()},
                  {"positive", sc.matches.num_positive()},
                  {"negative", neg},
                  {"ignored", n - neg - sc.matches.num_positive()},
                  {"negative_fraction", static_cast<double>(neg) / static_cast<double>(n)},
                  {"candidates", cand.dets.size()}};
  put(dir / "scenario_summary.json", summary.dump(2) + "\n");
  if (with_anchors) {
    const auto base = detkit::generate_default_boxes(cfg.image_size, detkit::default_pyramid(cfg.image_size))
                          .clipped(cfg.image_size);
    put(dir / "anchors.json", detkit::anchors_to_json(base));
  }
  return kExitOk;
}

int cmd_fit(const GlobalOptions& g, const std::string& out) {
  const auto cfg = load_config(g);
  const auto sc = detkit::generate_scenario(cfg);
  const auto dir = prepare_dir(out, cfg);

  const auto fit = detkit::fit_toy(detkit::ToyModel::selector(sc.heads.num_classes), sc, cfg);
  const auto cand = detkit::extract_detections(sc, fit.final_predictions, cfg.nms.mode);
  const auto kept = detkit::run_nms(cand, cfg.nms);
  const auto report = detkit::evaluate_detections(sc, kept, cfg.nms.mode);

  put(dir / "config.json", detkit::config_to_json(cfg));
  put(dir / "gt.json", detkit::ground_truth_to_json(sc.ground_truth()));
  put(dir / "loss_trace.csv", detkit::loss_trace_csv(fit.trace));
  put(dir / "loss_trace.svg", detkit::scatter_svg(trace_points(fit.trace), {"total loss", "epoch", "loss"}));
  emit_histograms(dir, "iou_tar_hist", fit.iou_tar_histograms);
  put(dir / "kept.csv", detkit::detections_to_csv(kept.dets));
  put(dir / "ap_report.json", detkit::ap_report_to_json(report));
  json summary = {{"epochs", cfg.fit.epochs},
                  {"step", cfg.fit.step},
                  {"initial", trace_point_json(fit.trace.front())},
                  {"final", trace_point_json(fit.trace.back())}};
  put(dir / "fit_summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

struct NmsArgs {
  std::string detections;
  std::string out;
  std::optional<std::string> mode;
  std::optional<double> threshold;
  std::optional<double> floor;
};

int cmd_nms(const GlobalOptions& g, const NmsArgs& a) {
  const auto cfg = load_config(g);
  detkit::NmsOptions opts = cfg.nms;
  try {
    if (a.mode) opts.mode = detkit::parse_score_mode(*a.mode);
  } catch (const std::invalid_argument& e) {
    throw detkit::ConfigError(e.what());
  }
  if (a.threshold) opts.iou_threshold = *a.threshold;
  if (a.floor) opts.score_floor = *a.floor;
  const auto dets = detkit::parse_detections_csv(detkit::read_file(a.detections));
  const auto kept = detkit::nms_by_image(dets, opts);
  const auto dir = prepare_dir(a.out, cfg);
  put(dir / "kept.csv", detkit::detections_to_csv(kept));
  json summary = {{"mode", detkit::to_string(opts.mode)},
                  {"iou_threshold", opts.iou_threshold},
                  {"score_floor", opts.score_floor},
                  {"input", dets.size()},
                  {"kept", kept.size()}};
  put(dir / "nms_summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

int cmd_eval(const GlobalOptions& g, const std::string& det_path, const std::string& gt_path,
             const std::optional<std::string>& mode_name, const std::string& out) {
  const auto cfg = load_config(g);
  detkit::ScoreMode mode = cfg.nms.mode;
  try {
    if (mode_name) mode = detkit::parse_score_mode(*mode_name);
  } catch (const std::invalid_argument& e) {
    throw detkit::ConfigError(e.what());
  }
  const auto dets = detkit::parse_detections_csv(detkit::read_file(det_path));
  const auto gts = detkit::parse_ground_truth_json(detkit::read_file(gt_path));
  const auto scored = detkit::to_scored(dets, mode);
  const detkit::ApReport report = [&] {
    try {
      return detkit::evaluate(scored, gts.annotations, gts.image_ids);
    } catch (const std::invalid_argument& e) {
      throw detkit::ConfigError(e.what());
    }
  }();
  const std::string text = detkit::ap_report_to_json(report);
  if (out.empty()) {
    std::cout << text;
  } else {
    put(out, text);
  }
  return kExitOk;
}

int cmd_rf(const std::string& chain_path, const std::string& builtin, std::optional<std::int64_t> input_size,
           const std::string& out) {
  detkit::ChainDocument doc;
  if (!chain_path.empty()) {
    doc = detkit::parse_chain_json(detkit::read_file(chain_path));
  } else {
    doc.layers = detkit::builtin_chain(builtin.empty() ? "dilated" : builtin);
    doc.input_size = 320;
  }
  if (input_size) doc.input_size = *input_size;
  const auto analysis = [&] {
    try {
      return detkit::analyze_chain(doc.initial, doc.layers, doc.input_size);
    } catch (const std::invalid_argument& e) {
      throw detkit::ConfigError(e.what());
    }
  }();
  const std::string csv = detkit::analysis_to_csv(analysis);
  if (out.empty()) {
    std::cout << csv;
  } else {
    put(out, csv);
  }
  return kExitOk;
}

int cmd_report(const GlobalOptions& g, const std::string& out) {
  const auto cfg = load_config(g);
  const auto sc = detkit::generate_scenario(cfg);
  const auto dir = prepare_dir(out, cfg);
  const auto& rc = cfg.report;

  put(dir / "config.json", detkit::config_to_json(cfg));
  put(dir / "gt.json", detkit::ground_truth_to_json(sc.ground_truth()));

  const auto cand = detkit::extract_detections(sc, sc.heads, detkit::ScoreMode::kStandard);
  put(dir / "candidates.csv", detkit::detections_to_csv(cand.dets));
  const auto ab = detkit::run_nms_ab(sc, cand, rc.nms_thresholds);
  put(dir / "nms_ab.csv", detkit::nms_ab_csv(ab, rc));
  for (const auto& row : ab.rows) {
    const std::string stem = detkit::to_string(row.mode) + "_" + threshold_tag(row.threshold);
    put(dir / ("kept_" + stem + ".csv"), detkit::detections_to_csv(row.kept_detections.dets));
    put(dir / ("scatter_" + stem + ".csv"), detkit::scatter_csv(row.scatter));
    put(dir / ("scatter_" + stem + ".svg"),
        detkit::scatter_svg(row.scatter, {"kept boxes: " + stem, "score", "true IOU"}));
  }

  const auto ablation = detkit::run_ablation(sc, rc.workers);
  put(dir / "ablation.csv", detkit::ablation_csv(ablation));
  for (const auto& row : ablation) {
    const std::string stem = "ablation_" + detkit::to_string(row.cls) + "_" + detkit::to_string(row.iou);
    put(dir / (stem + "_trace.csv"), detkit::loss_trace_csv(row.trace));
    put(dir / (stem + "_kept_" + detkit::to_string(row.nms_mode) + ".csv"), detkit::detections_to_csv(row.kept.dets));
  }

  if (rc.sweep_seeds > 0) {
    const auto sweep = detkit::run_calibrated_sweep(cfg, rc.sweep_seeds, cfg.nms.iou_threshold, rc.workers);
    put(dir / "calibrated_sweep.csv", detkit::sweep_csv(sweep));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"detkit: detection losses, NMS, AP and receptive-field experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Scenario config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the config seed");

  std::string out;
  bool with_anchors = false;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic scenario and its pre-NMS detections");
  gen->add_option("--out", out, "Output directory (default: config output_dir)");
  gen->add_flag("--anchors", with_anchors, "Also write the per-image anchor set");

  auto* fit = app.add_subcommand("fit", "Fit the toy linear heads and record loss and IOU_tar traces");
  fit->add_option("--out", out, "Output directory");

  NmsArgs nms_args;
  auto* nms = app.add_subcommand("nms", "Run per-image greedy NMS over a detections CSV");
  nms->add_option("--detections", nms_args.detections, "Detections CSV")->required()->check(CLI::ExistingFile);
  nms->add_option("--out", nms_args.out, "Output directory");
  nms->add_option("--mode", nms_args.mode, "standard | iou_guided");
  nms->add_option("--iou-threshold", nms_args.threshold, "Suppression threshold");
  nms->add_option("--score-floor", nms_args.floor, "Minimum score kept");

  std::string det_path, gt_path;
  std::optional<std::string> eval_mode;
  auto* eval = app.add_subcommand("eval", "Compute COCO-style AP for a detections CSV");
  eval->add_option("--detections", det_path, "Detections CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt_path, "Ground-truth JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--mode", eval_mode, "Score used for ranking: standard | iou_guided");
  eval->add_option("--out", out, "Report JSON path (default: stdout)");

  std::string chain_path, builtin;
  std::optional<std::int64_t> input_size;
  auto* rf = app.add_subcommand("rf", "Tabulate receptive field, jump and parameters of a layer chain");
  auto* chain_opt = rf->add_option("--chain", chain_path, "Layer chain JSON")->check(CLI::ExistingFile);
  rf->add_option("--builtin", builtin, "ssd | dilated")->excludes(chain_opt);
  rf->add_option("--input-size", input_size, "Input side for spatial sizes");
  rf->add_option("--out", out, "CSV path (default: stdout)");

  auto* report = app.add_subcommand("report", "NMS A/B, loss ablation and calibrated sweep tables");
  report->add_option("--out", out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen(g, out, with_anchors);
    if (*fit) return cmd_fit(g, out);
    if (*nms) return cmd_nms(g, nms_args);
    if (*eval) return cmd_eval(g, det_path, gt_path, eval_mode, out);
    if (*rf) return cmd_rf(chain_path, builtin, input_size, out);
    if (*report) return cmd_report(g, out);
  } catch (const detkit::ConfigError& e) {
    std::cerr << "detkit: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const detkit::NumericalError& e) {
    std::cerr << "detkit: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "detkit: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
