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

#include "detkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace detkit {

std::vector<double> EvalParams::coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) {
    t.push_back((50 + 5 * i) / 100.0);
  }
  return t;
}

std::vector<ScoredDetection> to_scored(std::span<const Detection> dets, ScoreMode mode) {
  std::vector<ScoredDetection> out;
  out.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    out.push_back({static_cast<std::int64_t>(i), d.image_id, d.class_id, d.box, score(d, mode)});
  }
  return out;
}

namespace {

struct ImageClassKey {
  std::int64_t image;
  int cls;
  auto operator<=>(const ImageClassKey&) const = default;
};

struct DetOutcome {
  double score;
  bool matched;
  bool ignored;
};

// Matches one (image, class) cell at one threshold and area range.
void match_cell(const std::vector<const ScoredDetection*>& dets, const std::vector<const GroundTruth*>& gts,
                double threshold, const AreaRange& area, std::vector<DetOutcome>& outcomes, std::size_t& num_gt) {
  auto outside = [&](double a) { return a < area.lo || a > area.hi; };
  // non-ignored ground truth first, stable
  std::vector<const GroundTruth*> g = gts;
  std::stable_sort(g.begin(), g.end(), [&](const GroundTruth* l, const GroundTruth* r) {
    return !outside(l->box.area()) && outside(r->box.area());
  });
  std::vector<bool> g_ignore(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g_ignore[i] = outside(g[i]->box.area());
    if (!g_ignore[i]) {
      ++num_gt;
    }
  }
  std::vector<bool> g_taken(g.size(), false);
  for (const auto* d : dets) {
    double best = std::min(threshold, 1.0 - 1e-10);
    int m = -1;
    for (std::size_t gi = 0; gi < g.size(); ++gi) {
      if (g_taken[gi]) {
        continue;
      }
      if (m > -1 && !g_ignore[static_cast<std::size_t>(m)] && g_ignore[gi]) {
        break;
      }
      const double v = iou_value(d->box, g[gi]->box);
      if (v < best) {
        continue;
      }
      best = v;
      m = static_cast<int>(gi);
    }
    DetOutcome o{d->score, false, false};
    if (m >= 0) {
      g_taken[static_cast<std::size_t>(m)] = true;
      o.matched = true;
      o.ignored = g_ignore[static_cast<std::size_t>(m)];
    } else {
      o.ignored = outside(d->box.area());
    }
    outcomes.push_back(o);
  }
}

// 101-point interpolated AP; nullopt when there is no ground truth.
std::optional<double> interpolated_ap(std::vector<DetOutcome> outcomes, std::size_t num_gt, int recall_points) {
  if (num_gt == 0) {
    return std::nullopt;
  }
  std::stable_sort(outcomes.begin(), outcomes.end(),
                   [](const DetOutcome& a, const DetOutcome& b) { return a.score > b.score; });
  std::vector<double> recall;
  std::vector<double> precision;
  double tp = 0.0;
  double fp = 0.0;
  for (const auto& o : outcomes) {
    if (o.ignored) {
      continue;
    }
    (o.matched ? tp : fp) += 1.0;
    recall.push_back(tp / static_cast<double>(num_gt));
    precision.push_back(tp / (tp + fp));
  }
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  for (int r = 0; r < recall_points; ++r) {
    const double thr = static_cast<double>(r) / (recall_points - 1);
    const auto it = std::lower_bound(recall.begin(), recall.end(), thr);
    if (it != recall.end()) {
      sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
  }
  return sum / recall_points;
}

std::optional<double> mean_valid(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  int n = 0;
  for (const auto& x : v) {
    if (x) {
      s += *x;
      ++n;
    }
  }
  if (n == 0) {
    return std::nullopt;
  }
  return s / n;
}

}  // namespace

ApReport evaluate(std::span<const ScoredDetection> detections, std::span<const GroundTruth> gts,
                  std::span<const std::int64_t> image_ids, const EvalParams& params) {
  const std::set<std::int64_t> images(image_ids.begin(), image_ids.end());
  std::set<std::int64_t> seen_ids;
  std::set<int> classes;
  std::map<ImageClassKey, std::vector<const ScoredDetection*>> det_cells;
  std::map<ImageClassKey, std::vector<const GroundTruth*>> gt_cells;

  for (const auto& d : detections) {
    if (!seen_ids.insert(d.id).second) {
      throw std::invalid_argument("evaluate: duplicate detection id " + std::to_string(d.id));
    }
    if (!images.contains(d.image_id)) {
      throw std::invalid_argument("evaluate: detection references unknown image " + std::to_string(d.image_id));
    }
    if (!std::isfinite(d.score)) {
      throw std::invalid_argument("evaluate: non-finite detection score");
    }
    det_cells[{d.image_id, d.class_id}].push_back(&d);
    classes.insert(d.class_id);
  }
  for (const auto& g : gts) {
    if (!images.contains(g.image_id)) {
      throw std::invalid_argument("evaluate: ground truth references unknown image " + std::to_string(g.image_id));
    }
    gt_cells[{g.image_id, g.class_id}].push_back(&g);
    classes.insert(g.class_id);
  }
  for (auto& [key, cell] : det_cells) {
    std::stable_sort(cell.begin(), cell.end(), [](const ScoredDetection* a, const ScoredDetection* b) {
      if (a->score != b->score) return a->score > b->score;
      return a->id < b->id;
    });
    if (cell.size() > static_cast<std::size_t>(params.max_dets)) {
      cell.resize(static_cast<std::size_t>(params.max_dets));
    }
  }

  static const std::vector<const ScoredDetection*> kNoDets;
  static const std::vector<const GroundTruth*> kNoGts;

  // ap[area][threshold] = mean over valid classes
  auto ap_for = [&](const AreaRange& area, double threshold) -> std::optional<double> {
    std::vector<std::optional<double>> per_class;
    for (int cls : classes) {
      std::vector<DetOutcome> outcomes;
      std::size_t num_gt = 0;
      for (std::int64_t img : images) {
        const ImageClassKey key{img, cls};
        const auto di = det_cells.find(key);
        const auto gi = gt_cells.find(key);
        match_cell(di == det_cells.end() ? kNoDets : di->second, gi == gt_cells.end() ? kNoGts : gi->second,
                   threshold, area, outcomes, num_gt);
      }
      per_class.push_back(interpolated_ap(std::move(outcomes), num_gt, params.recall_points));
    }
    return mean_valid(per_class);
  };

  ApReport rep;
  rep.iou_thresholds = params.iou_thresholds;
  auto over_thresholds = [&](const AreaRange& area, std::vector<std::optional<double>>* keep) {
    std::vector<std::optional<double>> v;
    for (double t : params.iou_thresholds) {
      v.push_back(ap_for(area, t));
    }
    if (keep != nullptr) {
      *keep = v;
    }
    return mean_valid(v);
  };
  rep.ap = over_thresholds(params.all, &rep.ap_per_threshold);
  for (std::size_t i = 0; i < params.iou_thresholds.size(); ++i) {
    if (std::abs(params.iou_thresholds[i] - 0.5) < 1e-12) {
      rep.ap50 = rep.ap_per_threshold[i];
    }
    if (std::abs(params.iou_thresholds[i] - 0.75) < 1e-12) {
      rep.ap75 = rep.ap_per_threshold[i];
    }
  }
  rep.ap_small = over_thresholds(params.small, nullptr);
  rep.ap_medium = over_thresholds(params.medium, nullptr);
  rep.ap_large = over_thresholds(params.large, nullptr);
  return rep;
}

std::string ap_report_to_json(const ApReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["AP"] = opt(r.ap);
  j["AP50"] = opt(r.ap50);
  j["AP75"] = opt(r.ap75);
  j["AP_small"] = opt(r.ap_small);
  j["AP_medium"] = opt(r.ap_medium);
  j["AP_large"] = opt(r.ap_large);
  j["iou_thresholds"] = r.iou_thresholds;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& v : r.ap_per_threshold) {
    per.push_back(opt(v));
  }
  j["AP_per_threshold"] = per;
  return j.dump(2);
}

}  // namespace detkit
