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

#include <array>
#include <cstddef>
#include <vector>

#include "detkit/anchors.hpp"
#include "detkit/geometry.hpp"

namespace detkit {

/// Probability clamp shared by every log-loss.
inline constexpr double kProbEps = 1e-6;

/// Balanced-l1 hyper-parameters. b follows from gamma = alpha * ln(b + 1);
/// C is fixed by continuity at |x| = 1.
struct BalanceL1Params {
  double alpha = 0.5;
  double gamma = 1.5;

  double b() const;
  double c() const;
};

/// Loss of one scalar input with its derivative.
struct ScalarLoss {
  double value = 0.0;
  double grad = 0.0;
};

ScalarLoss balance_l1(double x, const BalanceL1Params& params = {});
ScalarLoss smooth_l1(double x);

/// Loss comparing a predicted IOU with its target, with partials for both.
struct IouLossTerm {
  double value = 0.0;
  double d_pred = 0.0;
  double d_target = 0.0;
};

/// |ln p - ln t| with p clamped to [eps, 1]; throws std::invalid_argument for
/// a target outside (0, 1] or a NaN prediction.
IouLossTerm r_iou_loss(double p_iou, double iou_tar, double eps = kProbEps);

/// (p - t)^2, the ablation baseline for r_iou_loss.
IouLossTerm l2_iou_loss(double p_iou, double iou_tar);

struct CejiOptions {
  double iou_gate = 0.5;
  bool iou_tar_differentiable = true;
  double eps = kProbEps;
};

struct CejiTerm {
  double value = 0.0;
  double d_p_cls = 0.0;
  double d_iou_tar = 0.0;
  /// d value / d (x1, y1, x2, y2) of the regression box, via iou_tar.grad_a.
  std::array<double, 4> d_box{};
  bool ignored = false;
};

/// Positives: -ln(p_cls * iou_tar) when iou_tar >= gate, otherwise ignored.
/// Negatives: -ln(p_cls), where p_cls is the background probability.
CejiTerm ceji_loss(double p_cls, const IouValue& iou_tar, bool is_positive, const CejiOptions& opts = {});

enum class ClsLoss { kCeji, kCe };
enum class IouLoss { kRIou, kL2 };
enum class RegLoss { kBalanceL1, kSmoothL1 };

struct LossConfig {
  ClsLoss cls = ClsLoss::kCeji;
  IouLoss iou = IouLoss::kRIou;
  RegLoss reg = RegLoss::kBalanceL1;
  BalanceL1Params balance{};
  Variances variances{};
  bool iou_tar_differentiable = true;
  double iou_gate = 0.5;
  double neg_pos_ratio = 3.0;
  double eps = kProbEps;
};

/// Per-anchor head outputs. Class 0 is background.
struct Predictions {
  std::size_t num_anchors = 0;
  std::size_t num_classes = 0;
  std::vector<double> logits;      // num_anchors x num_classes
  std::vector<double> offsets;     // num_anchors x 4, (t_cx, t_cy, t_w, t_h)
  std::vector<double> iou_logits;  // num_anchors

  static Predictions zeros(std::size_t anchors, std::size_t classes);
  void validate() const;
};

struct LossResult {
  double total = 0.0;
  double cls = 0.0;  // normalized components; total = cls + reg + iou
  double reg = 0.0;
  double iou = 0.0;
  std::size_t num_positive = 0;
  std::size_t num_negative_used = 0;
  double normalizer = 1.0;
  Predictions gradient;
  /// IOU between decoded box and assigned gt, one entry per positive anchor
  /// in anchor order.
  std::vector<double> positive_iou_tar;
};

/// Full detection loss over one (possibly batched) problem. `gt_classes`
/// holds foreground class ids in [1, num_classes).
LossResult total_loss(const AnchorSet& anchors, const MatchResult& matches, const Predictions& preds,
                      const std::vector<Box>& gt_boxes, const std::vector<int>& gt_classes,
                      const LossConfig& cfg = {});

double sigmoid(double z);

}  // namespace detkit
