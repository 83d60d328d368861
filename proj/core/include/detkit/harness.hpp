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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "detkit/anchors.hpp"
#include "detkit/eval.hpp"
#include "detkit/geometry.hpp"
#include "detkit/io.hpp"
#include "detkit/losses.hpp"
#include "detkit/nms.hpp"
#include "detkit/plot.hpp"

namespace detkit {

inline constexpr int kConfigSchemaVersion = 1;

/// Head-output noise applied to the ideal predictions of each anchor.
struct NoiseModel {
  double offset_sigma = 0.6;     // std-dev added to each encoded offset
  double cls_logit_sigma = 1.0;  // std-dev added to each class logit
  double iou_logit_sigma = 0.5;  // std-dev added to the IOU logit
  double logit_margin = 4.0;     // ideal logit of the true class (others 0)
};

struct FitConfig {
  int epochs = 40;
  double step = 0.05;
  int histogram_bins = 10;
  int snapshots = 4;  // IOU_tar histograms at evenly spaced epochs, first and last included
  double divergence_factor = 1e6;  // abort once the loss exceeds this multiple of the initial loss
};

struct ReportConfig {
  std::vector<double> nms_thresholds{0.3, 0.5, 0.7};
  int sweep_seeds = 100;
  unsigned workers = 0;  // 0: hardware concurrency
  double high_score = 0.5;
  double low_iou = 0.5;
};

struct ScenarioConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 7;
  int image_size = 320;
  int num_images = 4;
  int objects_min = 1;
  int objects_max = 4;
  int num_classes = 3;  // foreground classes
  double object_scale_min = 0.1;  // object side as a fraction of the image side
  double object_scale_max = 0.6;
  double max_object_overlap = 0.3;  // rejection threshold between placed objects
  int pre_nms_top_k = 200;          // candidates per image and class
  NoiseModel noise{};
  LossConfig losses{};
  NmsOptions nms{};
  FitConfig fit{};
  ReportConfig report{};
  std::string output_dir = "out";

  /// Throws ConfigError when the configuration cannot be realized.
  void validate() const;
};

/// Throws ConfigError on malformed JSON, unknown keys or invalid values.
ScenarioConfig parse_config_json(const std::string& text);
std::string config_to_json(const ScenarioConfig& cfg);

struct ImageScene {
  std::int64_t image_id = 0;
  std::vector<Box> boxes;
  std::vector<int> classes;  // 1..num_classes
};

/// A batched synthetic problem: every image shares the same clipped anchor
/// grid; anchors of image i occupy [i * anchors_per_image, (i+1) * ...).
struct Scenario {
  ScenarioConfig cfg;
  std::vector<ImageScene> images;
  std::size_t anchors_per_image = 0;
  AnchorSet anchors;  // batched
  MatchResult matches;
  std::vector<Box> gt_boxes;  // flattened over images
  std::vector<int> gt_classes;
  std::vector<std::int64_t> gt_image;
  Predictions heads;  // noisy head outputs, also the toy model's features

  std::int64_t image_of_anchor(std::size_t a) const {
    return images[a / anchors_per_image].image_id;
  }
  GroundTruthSet ground_truth() const;
};

Scenario generate_scenario(const ScenarioConfig& cfg);

/// Detections with their true IOU against the best same-class gt of their
/// image (the scatter y-axis).
struct DetectionSet {
  std::vector<Detection> dets;
  std::vector<double> true_iou;
};

/// Decodes per-class candidates with p_cls >= floor, keeping the top-k per
/// (image, class) by score(mode). With `calibrated_iou`, p_iou is replaced
/// by the true IOU.
DetectionSet extract_detections(const Scenario& sc, const Predictions& preds, ScoreMode rank_mode,
                                bool calibrated_iou = false);

/// Per-image NMS preserving the true-IOU side channel.
DetectionSet run_nms(const DetectionSet& in, const NmsOptions& opts);

ApReport evaluate_detections(const Scenario& sc, const DetectionSet& dets, ScoreMode mode);

/// Linear heads over per-anchor features [offsets(4), logits(C), iou_logit, 1].
struct ToyModel {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;  // including background
  std::vector<double> w_offsets;  // 4 x F
  std::vector<double> w_logits;   // C x F
  std::vector<double> w_iou;      // 1 x F

  /// Selector initialization: predictions reproduce the feature heads.
  static ToyModel selector(std::size_t num_classes);
  Predictions predict(const Predictions& features) const;
  bool finite() const;
};

struct LossTracePoint {
  int epoch = 0;
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double iou = 0.0;
  std::size_t num_positive = 0;
};

struct HistogramSnapshot {
  int epoch = 0;
  Histogram histogram;
};

struct FitResult {
  ToyModel model;
  std::vector<LossTracePoint> trace;  // epoch 0 is the initial loss
  std::vector<HistogramSnapshot> iou_tar_histograms;
  Predictions final_predictions;
};

/// Full-batch fixed-step gradient descent on total_loss. Throws
/// NumericalError when the loss or parameters become non-finite, or the
/// loss exceeds fit.divergence_factor times its initial value.
FitResult fit_toy(const ToyModel& init, const Scenario& sc, const ScenarioConfig& cfg);

struct NmsAbRow {
  ScoreMode mode = ScoreMode::kStandard;
  double threshold = 0.5;
  std::size_t kept = 0;
  std::size_t high_score_low_iou = 0;
  ApReport report;
  std::vector<ScatterPoint> scatter;  // (score, true IOU) per kept box
  DetectionSet kept_detections;
};

struct NmsAbReport {
  std::vector<NmsAbRow> rows;
};

/// Runs both score modes at each threshold over pre-NMS candidates.
NmsAbReport run_nms_ab(const Scenario& sc, const DetectionSet& candidates, const std::vector<double>& thresholds);

/// Candidates are extracted from the scenario's noisy heads.
NmsAbReport run_nms_ab(const Scenario& sc, const std::vector<double>& thresholds, bool calibrated_iou = false);

std::size_t count_high_score_low_iou(const NmsAbRow& row, double high_score, double low_iou);

struct AblationRow {
  ClsLoss cls = ClsLoss::kCeji;
  IouLoss iou = IouLoss::kRIou;
  ScoreMode nms_mode = ScoreMode::kStandard;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  ApReport report;
  std::vector<LossTracePoint> trace;
  DetectionSet kept;  // post-NMS detections of the fitted model
};

/// Fits every {CEJI, CE} x {R_IOU, L2} combination on the same scenario and
/// evaluates each fit under both NMS modes (rows ordered combo-major).
std::vector<AblationRow> run_ablation(const Scenario& sc, unsigned workers = 0);

struct SweepRow {
  std::uint64_t seed = 0;
  std::size_t standard_count = 0;
  std::size_t guided_count = 0;
};

/// Calibrated-IOU NMS A/B over seeds [cfg.seed, cfg.seed + n).
std::vector<SweepRow> run_calibrated_sweep(const ScenarioConfig& cfg, int n, double threshold, unsigned workers = 0);

/// Runs fn(0..n-1) on a worker pool; results must be written by index.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

std::string to_string(ClsLoss l);
std::string to_string(IouLoss l);
std::string to_string(RegLoss l);

// CSV emitters; every value is printed with format_double.
std::string loss_trace_csv(const std::vector<LossTracePoint>& trace);
std::string histograms_csv(const std::vector<HistogramSnapshot>& snaps);
std::string scatter_csv(const std::vector<ScatterPoint>& pts);
std::string nms_ab_csv(const NmsAbReport& rep, const ReportConfig& rc);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace detkit
