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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "detkit/geometry.hpp"
#include "detkit/nms.hpp"

namespace detkit {

struct GroundTruth {
  std::int64_t image_id = 0;
  int class_id = 0;
  Box box;
};

struct ScoredDetection {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  int class_id = 0;
  Box box;
  double score = 0.0;
};

/// Assigns ids 0..n-1 in input order and scores with `mode`.
std::vector<ScoredDetection> to_scored(std::span<const Detection> dets, ScoreMode mode);

struct AreaRange {
  double lo = 0.0;
  double hi = 1e10;
};

/// COCO protocol constants.
struct EvalParams {
  std::vector<double> iou_thresholds = coco_iou_thresholds();
  int recall_points = 101;
  int max_dets = 100;
  AreaRange all{0.0, 1e10};
  AreaRange small{0.0, 32.0 * 32.0};
  AreaRange medium{32.0 * 32.0, 96.0 * 96.0};
  AreaRange large{96.0 * 96.0, 1e10};

  static std::vector<double> coco_iou_thresholds();
};

/// Fields are empty when no ground truth falls in their split; present
/// values lie in [0, 1].
struct ApReport {
  std::optional<double> ap;
  std::optional<double> ap50;
  std::optional<double> ap75;
  std::optional<double> ap_small;
  std::optional<double> ap_medium;
  std::optional<double> ap_large;
  std::vector<double> iou_thresholds;
  std::vector<std::optional<double>> ap_per_threshold;  // area "all"
};

/// `image_ids` is the image universe; every detection and ground truth must
/// reference one of them. Throws std::invalid_argument on duplicate detection
/// ids or unknown image ids.
ApReport evaluate(std::span<const ScoredDetection> detections, std::span<const GroundTruth> gts,
                  std::span<const std::int64_t> image_ids, const EvalParams& params = {});

std::string ap_report_to_json(const ApReport& report);

}  // namespace detkit
