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
#include <string>
#include <vector>

#include "detkit/geometry.hpp"

namespace detkit {

/// One prediction level of the feature pyramid. `next_scale_ratio` is s_{k+1},
/// used for the extra square box of side sqrt(s_k * s_{k+1}) * input.
struct FeatureLevelSpec {
  int grid_h = 1;
  int grid_w = 1;
  double stride = 1.0;
  double scale_ratio = 0.1;
  double next_scale_ratio = 0.1;
  std::vector<double> aspect_ratios{1.0, 2.0, 0.5};

  std::size_t templates_per_cell() const { return aspect_ratios.size() + 1; }
  void validate() const;
};

/// Size ratios of default boxes relative to the input: seven values for six maps.
inline constexpr double kDefaultScaleRatios[7] = {0.06, 0.15, 0.33, 0.51, 0.69, 0.87, 1.05};

/// Six-level pyramid. At 320 this is grids (40,20,10,5,3,1), strides
/// (8,16,32,64,107,320); other sizes scale the grids proportionally.
std::vector<FeatureLevelSpec> default_pyramid(int input_size);

struct AnchorSet {
  std::vector<Box> boxes;
  std::vector<int> level_index;
  std::vector<int> cell_index;
  std::vector<int> template_index;

  std::size_t size() const { return boxes.size(); }
  AnchorSet clipped(double input_size) const;
};

/// Cell-major within level, template-minor: for each level, row, column, the
/// aspect-ratio boxes in order followed by the extra square box.
AnchorSet generate_default_boxes(double input_size, const std::vector<FeatureLevelSpec>& levels);

/// Array of [x1, y1, x2, y2, level, cell, template].
std::string anchors_to_json(const AnchorSet& anchors);

enum class MatchLabel : std::uint8_t { kNegative, kPositive, kIgnored };

struct MatchOptions {
  double pos_threshold = 0.4;
  /// Anchors with best IOU in [neg_threshold, pos_threshold] are ignored.
  /// Equal to pos_threshold by default, i.e. no ignore band.
  double neg_threshold = 0.4;
  bool force_best_match = true;
};

struct MatchResult {
  std::vector<MatchLabel> labels;
  std::vector<int> gt_index;  // -1 unless positive
  std::vector<double> best_iou;

  std::size_t num_positive() const;
  std::size_t num_negative() const;
};

MatchResult match_anchors(const AnchorSet& anchors, const std::vector<Box>& gts, const MatchOptions& opts = {});

}  // namespace detkit
