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

#include "detkit/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace detkit {

void FeatureLevelSpec::validate() const {
  if (grid_h < 1 || grid_w < 1) {
    throw std::invalid_argument("FeatureLevelSpec: grid dims must be >= 1");
  }
  if (!(stride > 0.0)) {
    throw std::invalid_argument("FeatureLevelSpec: stride must be positive");
  }
  auto in_range = [](double s) { return s > 0.0 && s <= 1.2; };
  if (!in_range(scale_ratio) || !in_range(next_scale_ratio)) {
    throw std::invalid_argument("FeatureLevelSpec: scale ratio outside (0, 1.2]");
  }
  if (aspect_ratios.empty()) {
    throw std::invalid_argument("FeatureLevelSpec: aspect ratio list is empty");
  }
  for (double ar : aspect_ratios) {
    if (!(ar > 0.0)) {
      throw std::invalid_argument("FeatureLevelSpec: aspect ratios must be positive");
    }
  }
}

std::vector<FeatureLevelSpec> default_pyramid(int input_size) {
  if (input_size <= 0) {
    throw std::invalid_argument("default_pyramid: input size must be positive");
  }
  constexpr int kGrid320[6] = {40, 20, 10, 5, 3, 1};
  std::vector<FeatureLevelSpec> levels;
  for (int k = 0; k < 6; ++k) {
    const int grid = std::max(1, static_cast<int>(std::lround(kGrid320[k] * input_size / 320.0)));
    FeatureLevelSpec lvl;
    lvl.grid_h = lvl.grid_w = grid;
    lvl.stride = std::ceil(static_cast<double>(input_size) / grid);
    lvl.scale_ratio = kDefaultScaleRatios[k];
    lvl.next_scale_ratio = kDefaultScaleRatios[k + 1];
    levels.push_back(lvl);
  }
  return levels;
}

AnchorSet generate_default_boxes(double input_size, const std::vector<FeatureLevelSpec>& levels) {
  if (levels.empty()) {
    throw std::invalid_argument("generate_default_boxes: empty level list");
  }
  if (!(input_size > 0.0)) {
    throw std::invalid_argument("generate_default_boxes: input size must be positive");
  }
  std::size_t total = 0;
  for (const auto& lvl : levels) {
    lvl.validate();
    total += static_cast<std::size_t>(lvl.grid_h) * lvl.grid_w * lvl.templates_per_cell();
  }
  AnchorSet out;
  out.boxes.reserve(total);
  out.level_index.reserve(total);
  out.cell_index.reserve(total);
  out.template_index.reserve(total);

  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto& lvl = levels[k];
    const double side = lvl.scale_ratio * input_size;
    const double extra = std::sqrt(lvl.scale_ratio * lvl.next_scale_ratio) * input_size;
    for (int i = 0; i < lvl.grid_h; ++i) {
      for (int j = 0; j < lvl.grid_w; ++j) {
        const double cx = (j + 0.5) * lvl.stride;
        const double cy = (i + 0.5) * lvl.stride;
        const int cell = i * lvl.grid_w + j;
        int t = 0;
        auto emit = [&](double w, double h) {
          out.boxes.push_back(Box::from_center(cx, cy, w, h));
          out.level_index.push_back(static_cast<int>(k));
          out.cell_index.push_back(cell);
          out.template_index.push_back(t++);
        };
        for (double ar : lvl.aspect_ratios) {
          const double r = std::sqrt(ar);
          emit(side * r, side / r);
        }
        emit(extra, extra);
      }
    }
  }
  return out;
}

AnchorSet AnchorSet::clipped(double input_size) const {
  AnchorSet out = *this;
  for (auto& b : out.boxes) {
    b = b.clipped(input_size, input_size);
  }
  return out;
}

std::string anchors_to_json(const AnchorSet& anchors) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& b = anchors.boxes[i];
    arr.push_back({b.x1, b.y1, b.x2, b.y2, anchors.level_index[i], anchors.cell_index[i], anchors.template_index[i]});
  }
  return arr.dump();
}

std::size_t MatchResult::num_positive() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), MatchLabel::kPositive));
}

std::size_t MatchResult::num_negative() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), MatchLabel::kNegative));
}

MatchResult match_anchors(const AnchorSet& anchors, const std::vector<Box>& gts, const MatchOptions& opts) {
  if (!(opts.pos_threshold > 0.0 && opts.pos_threshold < 1.0)) {
    throw std::invalid_argument("match_anchors: pos_threshold must lie in (0, 1)");
  }
  if (opts.neg_threshold > opts.pos_threshold || opts.neg_threshold < 0.0) {
    throw std::invalid_argument("match_anchors: neg_threshold must lie in [0, pos_threshold]");
  }
  const std::size_t n = anchors.size();
  MatchResult m;
  m.labels.assign(n, MatchLabel::kNegative);
  m.gt_index.assign(n, -1);
  m.best_iou.assign(n, 0.0);
  if (gts.empty()) {
    return m;
  }

  std::vector<int> best_gt(n, -1);
  std::vector<std::size_t> gt_best_anchor(gts.size(), 0);
  std::vector<double> gt_best_iou(gts.size(), 0.0);

  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou_value(anchors.boxes[a], gts[g]);
      if (v > m.best_iou[a]) {
        m.best_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      if (v > gt_best_iou[g]) {
        gt_best_iou[g] = v;
        gt_best_anchor[g] = a;
      }
    }
  }

  for (std::size_t a = 0; a < n; ++a) {
    const double v = m.best_iou[a];
    if (v > opts.pos_threshold) {
      m.labels[a] = MatchLabel::kPositive;
      m.gt_index[a] = best_gt[a];
    } else if (v >= opts.neg_threshold && opts.neg_threshold < opts.pos_threshold) {
      m.labels[a] = MatchLabel::kIgnored;
    }
  }

  if (opts.force_best_match) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_best_iou[g] <= 0.0) {
        continue;
      }
      const std::size_t a = gt_best_anchor[g];
      m.labels[a] = MatchLabel::kPositive;
      m.gt_index[a] = static_cast<int>(g);
      m.best_iou[a] = gt_best_iou[g];
    }
  }
  return m;
}

}  // namespace detkit
