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
#include <span>
#include <string>
#include <vector>

#include "detkit/geometry.hpp"

namespace detkit {

struct Detection {
  std::int64_t image_id = 0;
  int class_id = 0;
  Box box;
  double p_cls = 0.0;
  double p_iou = 1.0;

  /// Throws std::invalid_argument if a probability is outside [0, 1] or the
  /// box is invalid.
  void validate() const;
};

enum class ScoreMode { kStandard, kIouGuided };

std::string to_string(ScoreMode mode);
ScoreMode parse_score_mode(const std::string& s);

/// standard: p_cls; iou_guided: p_cls * p_iou.
double score(const Detection& d, ScoreMode mode);

struct NmsOptions {
  double iou_threshold = 0.5;
  ScoreMode mode = ScoreMode::kStandard;
  /// Detections scoring below the floor are dropped before suppression.
  double score_floor = 0.01;
};

/// Per-class greedy suppression on one image. Returns indices into `dets` of
/// the survivors in priority order: higher score first, then larger area,
/// then lower index. A box is suppressed by a kept box of the same class when
/// their IOU is strictly greater than the threshold.
std::vector<std::size_t> greedy_nms_indices(std::span<const Detection> dets, const NmsOptions& opts);
std::vector<Detection> greedy_nms(std::span<const Detection> dets, const NmsOptions& opts);

/// Runs greedy_nms per image_id; output is grouped by ascending image id.
std::vector<Detection> nms_by_image(std::span<const Detection> dets, const NmsOptions& opts);

/// Exhaustive oracle: enumerates every subset and returns the unique one that
/// is a fixed point of "kept iff no kept higher-priority same-class box
/// overlaps above threshold". Refuses more than 12 detections.
std::vector<std::size_t> nms_bruteforce_indices(std::span<const Detection> dets, const NmsOptions& opts);

inline constexpr std::size_t kBruteforceNmsLimit = 12;

}  // namespace detkit
