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

#include "detkit/nms.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

#include "detkit/error.hpp"

namespace detkit {

void Detection::validate() const {
  if (!(p_cls >= 0.0 && p_cls <= 1.0) || !(p_iou >= 0.0 && p_iou <= 1.0)) {
    throw std::invalid_argument("Detection: probabilities must lie in [0, 1]");
  }
  if (!box.valid()) {
    throw std::invalid_argument("Detection: invalid box");
  }
}

std::string to_string(ScoreMode mode) { return mode == ScoreMode::kStandard ? "standard" : "iou_guided"; }

ScoreMode parse_score_mode(const std::string& s) {
  if (s == "standard") {
    return ScoreMode::kStandard;
  }
  if (s == "iou_guided" || s == "guided") {
    return ScoreMode::kIouGuided;
  }
  throw ConfigError("unknown NMS mode '" + s + "' (expected standard or iou_guided)");
}

double score(const Detection& d, ScoreMode mode) {
  return mode == ScoreMode::kStandard ? d.p_cls : d.p_cls * d.p_iou;
}

namespace {

void check_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw std::invalid_argument("NMS: iou_threshold must lie in (0, 1)");
  }
}

// Candidates above the floor, sorted by priority.
std::vector<std::size_t> ranked_candidates(std::span<const Detection> dets, const NmsOptions& opts,
                                           std::vector<double>& scores) {
  scores.resize(dets.size());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    dets[i].validate();
    scores[i] = score(dets[i], opts.mode);
    if (scores[i] >= opts.score_floor) {
      idx.push_back(i);
    }
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    const double aa = dets[a].box.area();
    const double ab = dets[b].box.area();
    if (aa != ab) return aa > ab;
    return a < b;
  });
  return idx;
}

}  // namespace

std::vector<std::size_t> greedy_nms_indices(std::span<const Detection> dets, const NmsOptions& opts) {
  check_threshold(opts.iou_threshold);
  std::vector<double> scores;
  const auto order = ranked_candidates(dets, opts, scores);
  std::vector<std::size_t> kept;
  std::map<int, std::vector<std::size_t>> kept_by_class;
  for (std::size_t i : order) {
    auto& same = kept_by_class[dets[i].class_id];
    const bool suppressed = std::any_of(same.begin(), same.end(), [&](std::size_t k) {
      return iou_value(dets[k].box, dets[i].box) > opts.iou_threshold;
    });
    if (!suppressed) {
      same.push_back(i);
      kept.push_back(i);
    }
  }
  return kept;
}

std::vector<Detection> greedy_nms(std::span<const Detection> dets, const NmsOptions& opts) {
  std::vector<Detection> out;
  for (std::size_t i : greedy_nms_indices(dets, opts)) {
    out.push_back(dets[i]);
  }
  return out;
}

std::vector<Detection> nms_by_image(std::span<const Detection> dets, const NmsOptions& opts) {
  std::map<std::int64_t, std::vector<Detection>> groups;
  for (const auto& d : dets) {
    groups[d.image_id].push_back(d);
  }
  std::vector<Detection> out;
  for (const auto& [id, group] : groups) {
    auto kept = greedy_nms(group, opts);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

std::vector<std::size_t> nms_bruteforce_indices(std::span<const Detection> dets, const NmsOptions& opts) {
  check_threshold(opts.iou_threshold);
  if (dets.size() > kBruteforceNmsLimit) {
    throw std::invalid_argument("nms_bruteforce: refusing more than 12 detections");
  }
  std::vector<double> scores;
  const auto order = ranked_candidates(dets, opts, scores);
  const std::size_t m = order.size();

  // suppressors[i]: higher-priority same-class candidates overlapping i.
  std::vector<std::uint32_t> suppressors(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const auto& a = dets[order[i]];
      const auto& b = dets[order[j]];
      if (a.class_id == b.class_id && iou_value(a.box, b.box) > opts.iou_threshold) {
        suppressors[i] |= 1u << j;
      }
    }
  }

  std::uint32_t solution = 0;
  int found = 0;
  for (std::uint32_t subset = 0; subset < (1u << m); ++subset) {
    bool fixed_point = true;
    for (std::size_t i = 0; i < m && fixed_point; ++i) {
      const bool in = (subset >> i) & 1u;
      const bool free = (subset & suppressors[i]) == 0;
      fixed_point = in == free;
    }
    if (fixed_point) {
      solution = subset;
      ++found;
    }
  }
  if (found != 1) {
    throw std::logic_error("nms_bruteforce: expected a unique fixed point");
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < m; ++i) {
    if ((solution >> i) & 1u) {
      kept.push_back(order[i]);
    }
  }
  return kept;
}

}  // namespace detkit
