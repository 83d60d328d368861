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

#include <gtest/gtest.h>

#include <atomic>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "detkit/error.hpp"
#include "detkit/harness.hpp"

namespace detkit {
namespace {

ScenarioConfig small_config() {
  ScenarioConfig c;
  c.num_images = 2;
  c.fit.epochs = 10;
  return c;
}

ScenarioConfig noiseless(double margin) {
  ScenarioConfig c = small_config();
  c.noise.offset_sigma = c.noise.cls_logit_sigma = c.noise.iou_logit_sigma = 0.0;
  c.noise.logit_margin = margin;
  return c;
}

TEST(Config, JsonRoundTrip) {
  ScenarioConfig c;
  c.seed = 123;
  c.losses.cls = ClsLoss::kCe;
  c.losses.reg = RegLoss::kSmoothL1;
  c.nms.mode = ScoreMode::kIouGuided;
  c.report.nms_thresholds = {0.45};
  const std::string text = config_to_json(c);
  EXPECT_EQ(config_to_json(parse_config_json(text)), text);
}

TEST(Config, DefaultsApplyToOmittedFields) {
  const ScenarioConfig c = parse_config_json(R"({"schema_version": 1, "seed": 9})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.image_size, 320);
  EXPECT_EQ(c.losses.cls, ClsLoss::kCeji);
}

TEST(Config, RejectsInvalidDocuments) {
  for (const char* bad : {
           "{",
           R"({"seed": 1})",
           R"({"schema_version": 2})",
           R"({"schema_version": 1, "colour": "red"})",
           R"({"schema_version": 1, "loss": {"cls": "focal"}})",
           R"({"schema_version": 1, "nms": {"mode": "soft"}})",
           R"({"schema_version": 1, "image_size": "big"})",
           R"({"schema_version": 1, "objects": {"scale_max": 1.5}})",
           R"({"schema_version": 1, "objects": {"min": 5, "max": 2}})",
           R"({"schema_version": 1, "fit": {"step": 0}})",
       }) {
    EXPECT_THROW(parse_config_json(bad), ConfigError) << bad;
  }
}

TEST(Scenario, SameSeedSameScenario) {
  const Scenario a = generate_scenario(small_config());
  const Scenario b = generate_scenario(small_config());
  EXPECT_EQ(a.gt_boxes, b.gt_boxes);
  EXPECT_EQ(a.heads.offsets, b.heads.offsets);
  EXPECT_EQ(a.heads.logits, b.heads.logits);
  EXPECT_EQ(a.heads.iou_logits, b.heads.iou_logits);
  ScenarioConfig other = small_config();
  other.seed = 8;
  EXPECT_NE(generate_scenario(other).heads.offsets, a.heads.offsets);
}

TEST(Scenario, ObjectsRespectBoundsAndOverlap) {
  ScenarioConfig c = small_config();
  c.num_images = 6;
  const Scenario sc = generate_scenario(c);
  for (const auto& im : sc.images) {
    ASSERT_GE(im.boxes.size(), static_cast<std::size_t>(c.objects_min));
    ASSERT_LE(im.boxes.size(), static_cast<std::size_t>(c.objects_max));
    for (std::size_t i = 0; i < im.boxes.size(); ++i) {
      const Box& b = im.boxes[i];
      ASSERT_GE(b.x1, 0.0);
      ASSERT_LE(b.x2, c.image_size);
      ASSERT_GE(b.width(), c.object_scale_min * c.image_size - 1e-9);
      ASSERT_GE(im.classes[i], 1);
      ASSERT_LE(im.classes[i], c.num_classes);
      for (std::size_t j = i + 1; j < im.boxes.size(); ++j) ASSERT_LE(iou_value(b, im.boxes[j]), c.max_object_overlap);
    }
  }
  EXPECT_EQ(sc.anchors.size(), sc.anchors_per_image * sc.images.size());
}

TEST(Scenario, DefaultConfigIsMostlyNegative) {
  const Scenario sc = generate_scenario(ScenarioConfig{});
  const std::size_t n = sc.anchors.size();
  std::size_t negatives = 0;
  for (std::size_t i = 0; i < sc.images.size(); ++i) {
    AnchorSet per_image;
    per_image.boxes.assign(sc.anchors.boxes.begin() + static_cast<std::ptrdiff_t>(i * sc.anchors_per_image),
                           sc.anchors.boxes.begin() + static_cast<std::ptrdiff_t>((i + 1) * sc.anchors_per_image));
    per_image.level_index.assign(per_image.boxes.size(), 0);
    per_image.cell_index.assign(per_image.boxes.size(), 0);
    per_image.template_index.assign(per_image.boxes.size(), 0);
    negatives += match_anchors(per_image, sc.images[i].boxes).num_negative();
  }
  EXPECT_EQ(negatives, sc.matches.num_negative());
  EXPECT_GE(static_cast<double>(negatives) / static_cast<double>(n), 0.95);
}

TEST(Scenario, ImpossiblePlacementIsConfigError) {
  ScenarioConfig c = small_config();
  c.objects_min = c.objects_max = 30;
  c.object_scale_min = 0.5;
  c.max_object_overlap = 0.0;
  EXPECT_THROW(generate_scenario(c), ConfigError);
  c = small_config();
  c.object_scale_max = 1.2;
  EXPECT_THROW(generate_scenario(c), ConfigError);
}

TEST(Scenario, ZeroNoiseHeadsScorePerfectAp) {
  const Scenario sc = generate_scenario(noiseless(4.0));
  const DetectionSet kept = run_nms(extract_detections(sc, sc.heads, ScoreMode::kStandard), sc.cfg.nms);
  const ApReport r = evaluate_detections(sc, kept, ScoreMode::kStandard);
  EXPECT_DOUBLE_EQ(*r.ap, 1.0);
  EXPECT_DOUBLE_EQ(*r.ap50, 1.0);
  EXPECT_DOUBLE_EQ(*r.ap75, 1.0);
}

TEST(Fit, ZeroNoiseHeadsSitAtTheOptimum) {
  ScenarioConfig c = noiseless(50.0);
  c.fit.epochs = 0;
  const Scenario sc = generate_scenario(c);
  const FitResult fit = fit_toy(ToyModel::selector(sc.heads.num_classes), sc, c);
  ASSERT_EQ(fit.trace.size(), 1u);
  EXPECT_LT(fit.trace[0].total, 1e-12);
  EXPECT_GT(fit.trace[0].num_positive, 0u);
}

TEST(Fit, SelectorModelReproducesFeatures) {
  const Scenario sc = generate_scenario(small_config());
  const Predictions p = ToyModel::selector(sc.heads.num_classes).predict(sc.heads);
  EXPECT_EQ(p.offsets, sc.heads.offsets);
  EXPECT_EQ(p.logits, sc.heads.logits);
  EXPECT_EQ(p.iou_logits, sc.heads.iou_logits);
}

TEST(Fit, DefaultRunReducesLoss) {
  const Scenario sc = generate_scenario(small_config());
  const FitResult fit = fit_toy(ToyModel::selector(sc.heads.num_classes), sc, sc.cfg);
  EXPECT_LT(fit.trace.back().total, fit.trace.front().total);
  ASSERT_EQ(fit.iou_tar_histograms.size(), 4u);
  EXPECT_EQ(fit.iou_tar_histograms.front().epoch, 0);
  EXPECT_EQ(fit.iou_tar_histograms.back().epoch, sc.cfg.fit.epochs);
  for (const auto& h : fit.iou_tar_histograms) EXPECT_EQ(h.histogram.total(), sc.matches.num_positive());
  EXPECT_TRUE(fit.model.finite());
}

TEST(Fit, DivergenceIsNumericalError) {
  ScenarioConfig c = small_config();
  c.fit.step = 1e300;
  const Scenario sc = generate_scenario(c);
  EXPECT_THROW(fit_toy(ToyModel::selector(sc.heads.num_classes), sc, c), NumericalError);
}

TEST(NmsAb, UnitPredictedIouGivesIdenticalReports) {
  const Scenario sc = generate_scenario(small_config());
  DetectionSet cand = extract_detections(sc, sc.heads, ScoreMode::kStandard);
  for (auto& d : cand.dets) d.p_iou = 1.0;
  const NmsAbReport rep = run_nms_ab(sc, cand, {0.5});
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(ap_report_to_json(rep.rows[0].report), ap_report_to_json(rep.rows[1].report));
  EXPECT_EQ(rep.rows[0].kept, rep.rows[1].kept);
  EXPECT_EQ(rep.rows[0].high_score_low_iou, rep.rows[1].high_score_low_iou);
}

TEST(NmsAb, TwoBoxScenarioAtReportLevel) {
  Scenario sc;
  sc.images = {{0, {{0, 0, 10, 7}}, {1}}};
  DetectionSet cand;
  cand.dets = {{0, 1, {0, 0, 10, 10}, 0.95, 0.3}, {0, 1, {0, 0, 10, 7}, 0.85, 0.9}};
  cand.true_iou = {0.7, 1.0};
  const NmsAbReport rep = run_nms_ab(sc, cand, {0.5});
  ASSERT_EQ(rep.rows.size(), 2u);
  const auto& standard = rep.rows[0];
  const auto& guided = rep.rows[1];
  ASSERT_EQ(standard.kept, 1u);
  ASSERT_EQ(guided.kept, 1u);
  EXPECT_EQ(standard.kept_detections.dets[0].box, (Box{0, 0, 10, 10}));
  EXPECT_EQ(guided.kept_detections.dets[0].box, (Box{0, 0, 10, 7}));
  EXPECT_DOUBLE_EQ(standard.scatter[0].y, 0.7);
  EXPECT_DOUBLE_EQ(guided.scatter[0].y, 1.0);
  EXPECT_DOUBLE_EQ(*standard.report.ap75, 0.0);
  EXPECT_DOUBLE_EQ(*guided.report.ap75, 1.0);
}

TEST(NmsAb, CountsAreDerivableFromScatter) {
  const Scenario sc = generate_scenario(small_config());
  const NmsAbReport rep = run_nms_ab(sc, {0.5});
  for (const auto& row : rep.rows) {
    std::size_t n = 0;
    for (const auto& p : row.scatter) n += (p.x > 0.5 && p.y < 0.5) ? 1 : 0;
    EXPECT_EQ(row.high_score_low_iou, n);
    EXPECT_EQ(row.scatter.size(), row.kept);
  }
}

TEST(Sweep, CalibratedGuidedNeverWorseAndWorkerCountIrrelevant) {
  ScenarioConfig c = small_config();
  const auto serial = run_calibrated_sweep(c, 6, 0.5, 1);
  const auto pooled = run_calibrated_sweep(c, 6, 0.5, 4);
  EXPECT_EQ(sweep_csv(serial), sweep_csv(pooled));
  for (const auto& r : serial) EXPECT_LE(r.guided_count, r.standard_count);
}

TEST(Ablation, CoversBothAxesAndBothModes) {
  ScenarioConfig c = small_config();
  c.fit.epochs = 3;
  const Scenario sc = generate_scenario(c);
  const auto rows = run_ablation(sc, 2);
  ASSERT_EQ(rows.size(), 8u);
  const std::string csv = ablation_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "cls_loss,iou_loss,nms_mode,initial_loss,final_loss,AP,AP50,AP75,AP_small,AP_medium,AP_large");
  for (const char* key : {"ceji,r_iou,standard", "ce,r_iou,iou_guided", "ceji,l2,standard", "ce,l2,iou_guided"}) {
    EXPECT_NE(csv.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(csv, ablation_csv(run_ablation(sc, 1)));
}

TEST(ParallelFor, VisitsEachIndexOnceAndPropagatesErrors) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}

}  // namespace
}  // namespace detkit
