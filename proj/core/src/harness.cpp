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

#include "detkit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <initializer_list>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "detkit/error.hpp"
#include "detkit/random.hpp"

namespace detkit {

using nlohmann::json;

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

ClsLoss parse_cls(const std::string& s) {
  if (s == "ceji") return ClsLoss::kCeji;
  if (s == "ce") return ClsLoss::kCe;
  throw ConfigError("loss.cls: expected ceji|ce, got '" + s + "'");
}

IouLoss parse_iou(const std::string& s) {
  if (s == "r_iou") return IouLoss::kRIou;
  if (s == "l2") return IouLoss::kL2;
  throw ConfigError("loss.iou: expected r_iou|l2, got '" + s + "'");
}

RegLoss parse_reg(const std::string& s) {
  if (s == "balance_l1") return RegLoss::kBalanceL1;
  if (s == "smooth_l1") return RegLoss::kSmoothL1;
  throw ConfigError("loss.reg: expected balance_l1|smooth_l1, got '" + s + "'");
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

// Ideal iou logit; the upper clamp keeps exp() finite yet leaves 1 - p
// below double resolution of the loss terms.
double ideal_iou_logit(double iou) { return logit(std::clamp(iou, 1e-6, 1.0 - 1e-15)); }

std::vector<double> softmax_row(const double* z, std::size_t n) {
  const double m = *std::max_element(z, z + n);
  std::vector<double> p(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (p[i] = std::exp(z[i] - m));
  for (double& v : p) v /= s;
  return p;
}

std::string csv_line(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out += ',';
    out += c;
    first = false;
  }
  out += '\n';
  return out;
}

std::string opt_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::string to_string(ClsLoss l) { return l == ClsLoss::kCeji ? "ceji" : "ce"; }
std::string to_string(IouLoss l) { return l == IouLoss::kRIou ? "r_iou" : "l2"; }
std::string to_string(RegLoss l) { return l == RegLoss::kBalanceL1 ? "balance_l1" : "smooth_l1"; }

void ScenarioConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("schema_version: expected " + std::to_string(kConfigSchemaVersion));
  }
  if (image_size < 1) throw ConfigError("image_size must be >= 1");
  if (num_images < 1) throw ConfigError("num_images must be >= 1");
  if (objects_min < 0 || objects_max < objects_min) throw ConfigError("objects: need 0 <= min <= max");
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (!(object_scale_min > 0.0) || !(object_scale_max >= object_scale_min)) {
    throw ConfigError("objects: need 0 < scale_min <= scale_max");
  }
  if (object_scale_max > 1.0) throw ConfigError("objects: scale_max > 1 makes objects larger than the image");
  if (!(max_object_overlap >= 0.0 && max_object_overlap <= 1.0)) throw ConfigError("objects.max_overlap must be in [0, 1]");
  if (pre_nms_top_k < 1) throw ConfigError("nms.pre_nms_top_k must be >= 1");
  for (double s : {noise.offset_sigma, noise.cls_logit_sigma, noise.iou_logit_sigma}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("noise: sigmas must be finite and >= 0");
  }
  if (!std::isfinite(noise.logit_margin)) throw ConfigError("noise.logit_margin must be finite");
  if (!(losses.balance.alpha > 0.0) || !(losses.balance.gamma > 0.0)) throw ConfigError("loss: alpha, gamma must be > 0");
  if (!(losses.neg_pos_ratio >= 0.0)) throw ConfigError("loss.neg_pos_ratio must be >= 0");
  if (!(nms.iou_threshold > 0.0 && nms.iou_threshold < 1.0)) throw ConfigError("nms.iou_threshold must be in (0, 1)");
  if (!(nms.score_floor >= 0.0 && nms.score_floor <= 1.0)) throw ConfigError("nms.score_floor must be in [0, 1]");
  if (fit.epochs < 0) throw ConfigError("fit.epochs must be >= 0");
  if (!(fit.step > 0.0) || !std::isfinite(fit.step)) throw ConfigError("fit.step must be > 0");
  if (fit.histogram_bins < 1) throw ConfigError("fit.histogram_bins must be >= 1");
  if (fit.snapshots < 1) throw ConfigError("fit.snapshots must be >= 1");
  if (!(fit.divergence_factor > 1.0)) throw ConfigError("fit.divergence_factor must be > 1");
  for (double t : report.nms_thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("report.nms_thresholds must lie in (0, 1)");
  }
  if (report.sweep_seeds < 0) throw ConfigError("report.sweep_seeds must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ScenarioConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ScenarioConfig c;
  expect_keys(j, {"schema_version", "seed", "image_size", "num_images", "num_classes", "objects", "noise", "loss", "nms",
                  "fit", "report", "output_dir"},
              "config");
  if (!j.contains("schema_version")) throw ConfigError("config: schema_version is required");
  read(j, "schema_version", c.schema_version, "config");
  read(j, "seed", c.seed, "config");
  read(j, "image_size", c.image_size, "config");
  read(j, "num_images", c.num_images, "config");
  read(j, "num_classes", c.num_classes, "config");
  read(j, "output_dir", c.output_dir, "config");
  if (j.contains("objects")) {
    const auto& o = j["objects"];
    expect_keys(o, {"min", "max", "scale_min", "scale_max", "max_overlap"}, "objects");
    read(o, "min", c.objects_min, "objects");
    read(o, "max", c.objects_max, "objects");
    read(o, "scale_min", c.object_scale_min, "objects");
    read(o, "scale_max", c.object_scale_max, "objects");
    read(o, "max_overlap", c.max_object_overlap, "objects");
  }
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    expect_keys(n, {"offset_sigma", "cls_logit_sigma", "iou_logit_sigma", "logit_margin"}, "noise");
    read(n, "offset_sigma", c.noise.offset_sigma, "noise");
    read(n, "cls_logit_sigma", c.noise.cls_logit_sigma, "noise");
    read(n, "iou_logit_sigma", c.noise.iou_logit_sigma, "noise");
    read(n, "logit_margin", c.noise.logit_margin, "noise");
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    expect_keys(l, {"cls", "iou", "reg", "iou_tar_differentiable", "alpha", "gamma", "iou_gate", "neg_pos_ratio"}, "loss");
    std::string s;
    if (l.contains("cls")) c.losses.cls = parse_cls((read(l, "cls", s, "loss"), s));
    if (l.contains("iou")) c.losses.iou = parse_iou((read(l, "iou", s, "loss"), s));
    if (l.contains("reg")) c.losses.reg = parse_reg((read(l, "reg", s, "loss"), s));
    read(l, "iou_tar_differentiable", c.losses.iou_tar_differentiable, "loss");
    read(l, "alpha", c.losses.balance.alpha, "loss");
    read(l, "gamma", c.losses.balance.gamma, "loss");
    read(l, "iou_gate", c.losses.iou_gate, "loss");
    read(l, "neg_pos_ratio", c.losses.neg_pos_ratio, "loss");
  }
  if (j.contains("nms")) {
    const auto& n = j["nms"];
    expect_keys(n, {"mode", "iou_threshold", "score_floor", "pre_nms_top_k"}, "nms");
    if (n.contains("mode")) {
      std::string s;
      read(n, "mode", s, "nms");
      try {
        c.nms.mode = parse_score_mode(s);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("nms.mode: ") + e.what());
      }
    }
    read(n, "iou_threshold", c.nms.iou_threshold, "nms");
    read(n, "score_floor", c.nms.score_floor, "nms");
    read(n, "pre_nms_top_k", c.pre_nms_top_k, "nms");
  }
  if (j.contains("fit")) {
    const auto& f = j["fit"];
    expect_keys(f, {"epochs", "step", "histogram_bins", "snapshots", "divergence_factor"}, "fit");
    read(f, "divergence_factor", c.fit.divergence_factor, "fit");
    read(f, "epochs", c.fit.epochs, "fit");
    read(f, "step", c.fit.step, "fit");
    read(f, "histogram_bins", c.fit.histogram_bins, "fit");
    read(f, "snapshots", c.fit.snapshots, "fit");
  }
  if (j.contains("report")) {
    const auto& r = j["report"];
    expect_keys(r, {"nms_thresholds", "sweep_seeds", "workers", "high_score", "low_iou"}, "report");
    read(r, "nms_thresholds", c.report.nms_thresholds, "report");
    read(r, "sweep_seeds", c.report.sweep_seeds, "report");
    read(r, "workers", c.report.workers, "report");
    read(r, "high_score", c.report.high_score, "report");
    read(r, "low_iou", c.report.low_iou, "report");
  }
  c.validate();
  return c;
}

std::string config_to_json(const ScenarioConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["seed"] = c.seed;
  j["image_size"] = c.image_size;
  j["num_images"] = c.num_images;
  j["num_classes"] = c.num_classes;
  j["objects"] = {{"min", c.objects_min},
                  {"max", c.objects_max},
                  {"scale_min", c.object_scale_min},
                  {"scale_max", c.object_scale_max},
                  {"max_overlap", c.max_object_overlap}};
  j["noise"] = {{"offset_sigma", c.noise.offset_sigma},
                {"cls_logit_sigma", c.noise.cls_logit_sigma},
                {"iou_logit_sigma", c.noise.iou_logit_sigma},
                {"logit_margin", c.noise.logit_margin}};
  j["loss"] = {{"cls", to_string(c.losses.cls)},
               {"iou", to_string(c.losses.iou)},
               {"reg", to_string(c.losses.reg)},
               {"iou_tar_differentiable", c.losses.iou_tar_differentiable},
               {"alpha", c.losses.balance.alpha},
               {"gamma", c.losses.balance.gamma},
               {"iou_gate", c.losses.iou_gate},
               {"neg_pos_ratio", c.losses.neg_pos_ratio}};
  j["nms"] = {{"mode", to_string(c.nms.mode)},
              {"iou_threshold", c.nms.iou_threshold},
              {"score_floor", c.nms.score_floor},
              {"pre_nms_top_k", c.pre_nms_top_k}};
  j["fit"] = {{"epochs", c.fit.epochs},
              {"step", c.fit.step},
              {"histogram_bins", c.fit.histogram_bins},
              {"snapshots", c.fit.snapshots},
              {"divergence_factor", c.fit.divergence_factor}};
  j["report"] = {{"nms_thresholds", c.report.nms_thresholds},
                 {"sweep_seeds", c.report.sweep_seeds},
                 {"workers", c.report.workers},
                 {"high_score", c.report.high_score},
                 {"low_iou", c.report.low_iou}};
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

GroundTruthSet Scenario::ground_truth() const {
  GroundTruthSet g;
  for (const auto& im : images) {
    g.image_ids.push_back(im.image_id);
    for (std::size_t k = 0; k < im.boxes.size(); ++k) {
      g.annotations.push_back({im.image_id, im.classes[k], im.boxes[k]});
    }
  }
  return g;
}

namespace {

ImageScene place_objects(const ScenarioConfig& cfg, std::int64_t image_id, Rng& rng) {
  constexpr int kMaxAttempts = 1000;
  const double side = cfg.image_size;
  ImageScene scene;
  scene.image_id = image_id;
  const auto count = rng.uniform_int(cfg.objects_min, cfg.objects_max);
  for (std::int64_t k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const double w = side * rng.uniform(cfg.object_scale_min, cfg.object_scale_max);
      const double h = side * rng.uniform(cfg.object_scale_min, cfg.object_scale_max);
      const double x1 = rng.uniform(0.0, side - w);
      const double y1 = rng.uniform(0.0, side - h);
      const Box b{x1, y1, x1 + w, y1 + h};
      const bool clear = std::all_of(scene.boxes.begin(), scene.boxes.end(),
                                     [&](const Box& o) { return iou_value(b, o) <= cfg.max_object_overlap; });
      if (clear) {
        scene.boxes.push_back(b);
        scene.classes.push_back(static_cast<int>(rng.uniform_int(1, cfg.num_classes)));
        placed = true;
      }
    }
    if (!placed) {
      throw ConfigError("generate_scenario: could not place " + std::to_string(count) +
                        " objects without exceeding objects.max_overlap");
    }
  }
  return scene;
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  Scenario sc;
  sc.cfg = cfg;
  Rng rng(cfg.seed);

  const AnchorSet base =
      generate_default_boxes(cfg.image_size, default_pyramid(cfg.image_size)).clipped(cfg.image_size);
  sc.anchors_per_image = base.size();

  for (int i = 0; i < cfg.num_images; ++i) sc.images.push_back(place_objects(cfg, i, rng));

  const std::size_t classes = static_cast<std::size_t>(cfg.num_classes) + 1;
  for (const auto& im : sc.images) {
    const MatchResult m = match_anchors(base, im.boxes);
    const int gt_offset = static_cast<int>(sc.gt_boxes.size());
    for (std::size_t a = 0; a < base.size(); ++a) {
      sc.anchors.boxes.push_back(base.boxes[a]);
      sc.anchors.level_index.push_back(base.level_index[a]);
      sc.anchors.cell_index.push_back(base.cell_index[a]);
      sc.anchors.template_index.push_back(base.template_index[a]);
      sc.matches.labels.push_back(m.labels[a]);
      sc.matches.gt_index.push_back(m.gt_index[a] < 0 ? -1 : m.gt_index[a] + gt_offset);
      sc.matches.best_iou.push_back(m.best_iou[a]);
    }
    for (std::size_t k = 0; k < im.boxes.size(); ++k) {
      sc.gt_boxes.push_back(im.boxes[k]);
      sc.gt_classes.push_back(im.classes[k]);
      sc.gt_image.push_back(im.image_id);
    }
  }

  // Ideal heads: exact offsets to the matched gt, the matched class at
  // logit_margin (background for the rest), and the IOU logit of the noisy
  // decoded box against the best gt of its image.
  const std::size_t n = sc.anchors.size();
  sc.heads = Predictions::zeros(n, classes);
  const auto& nz = cfg.noise;
  for (std::size_t a = 0; a < n; ++a) {
    const Box& anchor = sc.anchors.boxes[a];
    const int g = sc.matches.gt_index[a];
    std::array<double, 4> t{};
    if (g >= 0) t = encode(anchor, sc.gt_boxes[static_cast<std::size_t>(g)], cfg.losses.variances).as_array();
    for (int k = 0; k < 4; ++k) sc.heads.offsets[a * 4 + k] = t[k] + nz.offset_sigma * rng.normal();

    const int cls = g >= 0 ? sc.gt_classes[static_cast<std::size_t>(g)] : 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double ideal = static_cast<int>(c) == cls ? nz.logit_margin : 0.0;
      sc.heads.logits[a * classes + c] = ideal + nz.cls_logit_sigma * rng.normal();
    }

    const Box decoded = decode(anchor, OffsetEncoding::from_array({sc.heads.offsets[a * 4], sc.heads.offsets[a * 4 + 1],
                                                                   sc.heads.offsets[a * 4 + 2],
                                                                   sc.heads.offsets[a * 4 + 3]}),
                               cfg.losses.variances);
    double best = 0.0;
    const auto& im = sc.images[a / sc.anchors_per_image];
    for (const Box& b : im.boxes) best = std::max(best, iou_value(decoded, b));
    sc.heads.iou_logits[a] = ideal_iou_logit(best) + nz.iou_logit_sigma * rng.normal();
  }
  return sc;
}

DetectionSet extract_detections(const Scenario& sc, const Predictions& preds, ScoreMode rank_mode,
                                bool calibrated_iou) {
  preds.validate();
  if (preds.num_anchors != sc.anchors.size()) throw std::invalid_argument("extract_detections: anchor count mismatch");
  const std::size_t classes = preds.num_classes;
  const double floor = sc.cfg.nms.score_floor;
  const double side = sc.cfg.image_size;
  const auto top_k = static_cast<std::size_t>(sc.cfg.pre_nms_top_k);

  DetectionSet out;
  for (std::size_t i = 0; i < sc.images.size(); ++i) {
    const auto& im = sc.images[i];
    std::vector<std::vector<std::pair<Detection, double>>> per_class(classes);
    for (std::size_t local = 0; local < sc.anchors_per_image; ++local) {
      const std::size_t a = i * sc.anchors_per_image + local;
      const auto p = softmax_row(&preds.logits[a * classes], classes);
      const double* o = &preds.offsets[a * 4];
      const Box box = decode(sc.anchors.boxes[a], OffsetEncoding::from_array({o[0], o[1], o[2], o[3]}),
                             sc.cfg.losses.variances)
                          .clipped(side, side);
      if (!(box.width() > 0.0 && box.height() > 0.0)) continue;
      const double p_iou = sigmoid(preds.iou_logits[a]);
      for (std::size_t c = 1; c < classes; ++c) {
        if (!(p[c] >= floor)) continue;
        double true_iou = 0.0;
        for (std::size_t k = 0; k < im.boxes.size(); ++k) {
          if (static_cast<std::size_t>(im.classes[k]) == c) true_iou = std::max(true_iou, iou_value(box, im.boxes[k]));
        }
        Detection d{im.image_id, static_cast<int>(c), box, p[c], calibrated_iou ? true_iou : p_iou};
        per_class[c].emplace_back(d, true_iou);
      }
    }
    for (auto& cand : per_class) {
      std::stable_sort(cand.begin(), cand.end(), [&](const auto& x, const auto& y) {
        return score(x.first, rank_mode) > score(y.first, rank_mode);
      });
      if (cand.size() > top_k) cand.resize(top_k);
      for (auto& [d, t] : cand) {
        out.dets.push_back(d);
        out.true_iou.push_back(t);
      }
    }
  }
  return out;
}

DetectionSet run_nms(const DetectionSet& in, const NmsOptions& opts) {
  // Group by image, keeping input order within each group.
  std::vector<std::size_t> order(in.dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return in.dets[x].image_id < in.dets[y].image_id; });
  DetectionSet out;
  std::size_t begin = 0;
  while (begin < order.size()) {
    std::size_t end = begin;
    while (end < order.size() && in.dets[order[end]].image_id == in.dets[order[begin]].image_id) ++end;
    std::vector<Detection> group;
    for (std::size_t k = begin; k < end; ++k) group.push_back(in.dets[order[k]]);
    for (std::size_t keep : greedy_nms_indices(group, opts)) {
      out.dets.push_back(group[keep]);
      out.true_iou.push_back(in.true_iou[order[begin + keep]]);
    }
    begin = end;
  }
  return out;
}

ApReport evaluate_detections(const Scenario& sc, const DetectionSet& dets, ScoreMode mode) {
  const GroundTruthSet g = sc.ground_truth();
  const auto scored = to_scored(dets.dets, mode);
  return evaluate(scored, g.annotations, g.image_ids);
}

ToyModel ToyModel::selector(std::size_t num_classes) {
  ToyModel m;
  m.num_classes = num_classes;
  m.feature_dim = 4 + num_classes + 2;
  const std::size_t f = m.feature_dim;
  m.w_offsets.assign(4 * f, 0.0);
  m.w_logits.assign(num_classes * f, 0.0);
  m.w_iou.assign(f, 0.0);
  for (std::size_t k = 0; k < 4; ++k) m.w_offsets[k * f + k] = 1.0;
  for (std::size_t c = 0; c < num_classes; ++c) m.w_logits[c * f + 4 + c] = 1.0;
  m.w_iou[4 + num_classes] = 1.0;
  return m;
}

namespace {

void features_of(const Predictions& x, std::size_t a, std::vector<double>& phi) {
  const std::size_t c = x.num_classes;
  for (std::size_t k = 0; k < 4; ++k) phi[k] = x.offsets[a * 4 + k];
  for (std::size_t k = 0; k < c; ++k) phi[4 + k] = x.logits[a * c + k];
  phi[4 + c] = x.iou_logits[a];
  phi[5 + c] = 1.0;
}

double dot(const double* w, const std::vector<double>& phi) {
  double s = 0.0;
  for (std::size_t k = 0; k < phi.size(); ++k) s += w[k] * phi[k];
  return s;
}

}  // namespace

Predictions ToyModel::predict(const Predictions& x) const {
  x.validate();
  if (x.num_classes != num_classes) throw std::invalid_argument("ToyModel::predict: class count mismatch");
  const std::size_t f = feature_dim;
  Predictions out = Predictions::zeros(x.num_anchors, num_classes);
  std::vector<double> phi(f);
  for (std::size_t a = 0; a < x.num_anchors; ++a) {
    features_of(x, a, phi);
    for (std::size_t k = 0; k < 4; ++k) out.offsets[a * 4 + k] = dot(&w_offsets[k * f], phi);
    for (std::size_t c = 0; c < num_classes; ++c) out.logits[a * num_classes + c] = dot(&w_logits[c * f], phi);
    out.iou_logits[a] = dot(w_iou.data(), phi);
  }
  return out;
}

bool ToyModel::finite() const {
  auto ok = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
  return ok(w_offsets) && ok(w_logits) && ok(w_iou);
}

FitResult fit_toy(const ToyModel& init, const Scenario& sc, const ScenarioConfig& cfg) {
  FitResult res;
  res.model = init;
  ToyModel& m = res.model;
  const std::size_t f = m.feature_dim;
  const Predictions& x = sc.heads;
  if (m.num_classes != x.num_classes || f != 4 + m.num_classes + 2) {
    throw std::invalid_argument("fit_toy: model shape does not match the scenario");
  }

  const int epochs = cfg.fit.epochs;
  std::set<int> snapshot_epochs;
  const int snaps = cfg.fit.snapshots;
  for (int s = 0; s < snaps; ++s) {
    snapshot_epochs.insert(snaps == 1 ? epochs : static_cast<int>(std::lround(static_cast<double>(s) * epochs / (snaps - 1))));
  }

  std::vector<double> phi(f);
  for (int epoch = 0;; ++epoch) {
    Predictions preds = m.predict(x);
    LossResult lr = total_loss(sc.anchors, sc.matches, preds, sc.gt_boxes, sc.gt_classes, cfg.losses);
    if (!std::isfinite(lr.total)) {
      throw NumericalError("fit_toy: loss became non-finite at epoch " + std::to_string(epoch));
    }
    if (epoch > 0 && lr.total > cfg.fit.divergence_factor * std::max(res.trace.front().total, 1e-12)) {
      throw NumericalError("fit_toy: diverged at epoch " + std::to_string(epoch) + " (loss " + format_double(lr.total) +
                           ", initial " + format_double(res.trace.front().total) + "); reduce fit.step");
    }
    res.trace.push_back({epoch, lr.total, lr.cls, lr.reg, lr.iou, lr.num_positive});
    if (snapshot_epochs.count(epoch)) {
      res.iou_tar_histograms.push_back(
          {epoch, Histogram::build(lr.positive_iou_tar, static_cast<std::size_t>(cfg.fit.histogram_bins))});
    }
    if (epoch == epochs) {
      res.final_predictions = std::move(preds);
      break;
    }

    std::vector<double> g_off(4 * f, 0.0), g_log(m.num_classes * f, 0.0), g_iou(f, 0.0);
    const Predictions& g = lr.gradient;
    const std::size_t c = m.num_classes;
    for (std::size_t a = 0; a < x.num_anchors; ++a) {
      features_of(x, a, phi);
      for (std::size_t k = 0; k < 4; ++k) {
        const double ga = g.offsets[a * 4 + k];
        if (ga != 0.0) {
          for (std::size_t q = 0; q < f; ++q) g_off[k * f + q] += ga * phi[q];
        }
      }
      for (std::size_t k = 0; k < c; ++k) {
        const double ga = g.logits[a * c + k];
        if (ga != 0.0) {
          for (std::size_t q = 0; q < f; ++q) g_log[k * f + q] += ga * phi[q];
        }
      }
      const double gi = g.iou_logits[a];
      if (gi != 0.0) {
        for (std::size_t q = 0; q < f; ++q) g_iou[q] += gi * phi[q];
      }
    }
    const double step = cfg.fit.step;
    for (std::size_t k = 0; k < g_off.size(); ++k) m.w_offsets[k] -= step * g_off[k];
    for (std::size_t k = 0; k < g_log.size(); ++k) m.w_logits[k] -= step * g_log[k];
    for (std::size_t k = 0; k < g_iou.size(); ++k) m.w_iou[k] -= step * g_iou[k];
    if (!m.finite()) {
      throw NumericalError("fit_toy: parameters became non-finite after epoch " + std::to_string(epoch));
    }
  }
  return res;
}

std::size_t count_high_score_low_iou(const NmsAbRow& row, double high_score, double low_iou) {
  std::size_t n = 0;
  for (const auto& p : row.scatter) n += (p.x > high_score && p.y < low_iou) ? 1 : 0;
  return n;
}

NmsAbReport run_nms_ab(const Scenario& sc, const DetectionSet& candidates, const std::vector<double>& thresholds) {
  NmsAbReport rep;
  for (double t : thresholds) {
    for (ScoreMode mode : {ScoreMode::kStandard, ScoreMode::kIouGuided}) {
      NmsAbRow row;
      row.mode = mode;
      row.threshold = t;
      NmsOptions opts = sc.cfg.nms;
      opts.mode = mode;
      opts.iou_threshold = t;
      row.kept_detections = run_nms(candidates, opts);
      row.kept = row.kept_detections.dets.size();
      for (std::size_t k = 0; k < row.kept; ++k) {
        row.scatter.push_back({score(row.kept_detections.dets[k], mode), row.kept_detections.true_iou[k]});
      }
      row.high_score_low_iou = count_high_score_low_iou(row, sc.cfg.report.high_score, sc.cfg.report.low_iou);
      row.report = evaluate_detections(sc, row.kept_detections, mode);
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

NmsAbReport run_nms_ab(const Scenario& sc, const std::vector<double>& thresholds, bool calibrated_iou) {
  // Standard ranking for the pre-NMS cut keeps both arms on the same pool.
  return run_nms_ab(sc, extract_detections(sc, sc.heads, ScoreMode::kStandard, calibrated_iou), thresholds);
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<AblationRow> run_ablation(const Scenario& sc, unsigned workers) {
  const std::pair<ClsLoss, IouLoss> combos[] = {{ClsLoss::kCeji, IouLoss::kRIou},
                                                {ClsLoss::kCe, IouLoss::kRIou},
                                                {ClsLoss::kCeji, IouLoss::kL2},
                                                {ClsLoss::kCe, IouLoss::kL2}};
  constexpr ScoreMode kModes[] = {ScoreMode::kStandard, ScoreMode::kIouGuided};
  std::vector<AblationRow> rows(std::size(combos) * std::size(kModes));
  parallel_for(std::size(combos), workers, [&](std::size_t i) {
    ScenarioConfig cfg = sc.cfg;
    cfg.losses.cls = combos[i].first;
    cfg.losses.iou = combos[i].second;
    const FitResult fit = fit_toy(ToyModel::selector(sc.heads.num_classes), sc, cfg);
    for (std::size_t m = 0; m < std::size(kModes); ++m) {
      AblationRow& r = rows[i * std::size(kModes) + m];
      r.cls = combos[i].first;
      r.iou = combos[i].second;
      r.nms_mode = kModes[m];
      r.trace = fit.trace;
      r.initial_loss = fit.trace.front().total;
      r.final_loss = fit.trace.back().total;
      NmsOptions opts = cfg.nms;
      opts.mode = kModes[m];
      r.kept = run_nms(extract_detections(sc, fit.final_predictions, opts.mode), opts);
      r.report = evaluate_detections(sc, r.kept, opts.mode);
    }
  });
  return rows;
}

std::vector<SweepRow> run_calibrated_sweep(const ScenarioConfig& cfg, int n, double threshold, unsigned workers) {
  std::vector<SweepRow> rows(static_cast<std::size_t>(std::max(n, 0)));
  parallel_for(rows.size(), workers, [&](std::size_t i) {
    ScenarioConfig c = cfg;
    c.seed = cfg.seed + i;
    const Scenario sc = generate_scenario(c);
    const NmsAbReport rep = run_nms_ab(sc, {threshold}, true);
    rows[i].seed = c.seed;
    for (const auto& row : rep.rows) {
      (row.mode == ScoreMode::kStandard ? rows[i].standard_count : rows[i].guided_count) = row.high_score_low_iou;
    }
  });
  return rows;
}

std::string loss_trace_csv(const std::vector<LossTracePoint>& trace) {
  std::string out = "epoch,total,cls,reg,iou,num_positive\n";
  for (const auto& p : trace) {
    out += csv_line({std::to_string(p.epoch), format_double(p.total), format_double(p.cls), format_double(p.reg),
                     format_double(p.iou), std::to_string(p.num_positive)});
  }
  return out;
}

std::string histograms_csv(const std::vector<HistogramSnapshot>& snaps) {
  std::string out = "epoch,bin,lo,hi,count\n";
  for (const auto& s : snaps) {
    for (std::size_t b = 0; b < s.histogram.counts.size(); ++b) {
      out += csv_line({std::to_string(s.epoch), std::to_string(b), format_double(s.histogram.bin_lo(b)),
                       format_double(s.histogram.bin_hi(b)), std::to_string(s.histogram.counts[b])});
    }
  }
  return out;
}

std::string scatter_csv(const std::vector<ScatterPoint>& pts) {
  std::string out = "score,true_iou\n";
  for (const auto& p : pts) out += csv_line({format_double(p.x), format_double(p.y)});
  return out;
}

std::string nms_ab_csv(const NmsAbReport& rep, const ReportConfig& rc) {
  std::string out = "mode,threshold,kept,high_score_low_iou,AP,AP50,AP75,AP_small,AP_medium,AP_large\n";
  for (const auto& r : rep.rows) {
    out += csv_line({to_string(r.mode), format_double(r.threshold), std::to_string(r.kept),
                     std::to_string(count_high_score_low_iou(r, rc.high_score, rc.low_iou)), opt_cell(r.report.ap),
                     opt_cell(r.report.ap50), opt_cell(r.report.ap75), opt_cell(r.report.ap_small),
                     opt_cell(r.report.ap_medium), opt_cell(r.report.ap_large)});
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "cls_loss,iou_loss,nms_mode,initial_loss,final_loss,AP,AP50,AP75,AP_small,AP_medium,AP_large\n";
  for (const auto& r : rows) {
    out += csv_line({to_string(r.cls), to_string(r.iou), to_string(r.nms_mode), format_double(r.initial_loss), format_double(r.final_loss),
                     opt_cell(r.report.ap), opt_cell(r.report.ap50), opt_cell(r.report.ap75),
                     opt_cell(r.report.ap_small), opt_cell(r.report.ap_medium), opt_cell(r.report.ap_large)});
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "seed,standard_count,guided_count\n";
  for (const auto& r : rows) {
    out += csv_line({std::to_string(r.seed), std::to_string(r.standard_count), std::to_string(r.guided_count)});
  }
  return out;
}

}  // namespace detkit
