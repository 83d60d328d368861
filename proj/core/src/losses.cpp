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

#include "detkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace detkit {

double BalanceL1Params::b() const { return std::exp(gamma / alpha) - 1.0; }

double BalanceL1Params::c() const {
  // (alpha/b)(b+1)ln(b+1) - alpha - gamma, simplified with ln(b+1) = gamma/alpha.
  return gamma / b() - alpha;
}

ScalarLoss balance_l1(double x, const BalanceL1Params& params) {
  const double ax = std::abs(x);
  const double sgn = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  const double b = params.b();
  if (ax < 1.0) {
    const double u = b * ax + 1.0;
    const double lu = std::log(u);
    return {params.alpha / b * u * lu - params.alpha * ax, params.alpha * lu * sgn};
  }
  return {params.gamma * ax + params.c(), params.gamma * sgn};
}

ScalarLoss smooth_l1(double x) {
  const double ax = std::abs(x);
  if (ax < 1.0) {
    return {0.5 * x * x, x};
  }
  return {ax - 0.5, x > 0.0 ? 1.0 : -1.0};
}

IouLossTerm r_iou_loss(double p_iou, double iou_tar, double eps) {
  if (std::isnan(p_iou)) {
    throw std::invalid_argument("r_iou_loss: predicted IOU is NaN");
  }
  if (!(iou_tar > 0.0 && iou_tar <= 1.0)) {
    throw std::invalid_argument("r_iou_loss: target IOU must lie in (0, 1]");
  }
  const bool clamped = p_iou < eps || p_iou > 1.0;
  const double p = std::clamp(p_iou, eps, 1.0);
  IouLossTerm out;
  if (p < iou_tar) {
    out.value = -std::log(p / iou_tar);
    out.d_pred = clamped ? 0.0 : -1.0 / p;
    out.d_target = 1.0 / iou_tar;
  } else if (p > iou_tar) {
    out.value = -std::log(iou_tar / p);
    out.d_pred = clamped ? 0.0 : 1.0 / p;
    out.d_target = -1.0 / iou_tar;
  }
  return out;
}

IouLossTerm l2_iou_loss(double p_iou, double iou_tar) {
  const double r = p_iou - iou_tar;
  return {r * r, 2.0 * r, -2.0 * r};
}

CejiTerm ceji_loss(double p_cls, const IouValue& iou_tar, bool is_positive, const CejiOptions& opts) {
  if (std::isnan(p_cls)) {
    throw std::invalid_argument("ceji_loss: class probability is NaN");
  }
  if (!(iou_tar.value >= 0.0 && iou_tar.value <= 1.0)) {
    throw std::invalid_argument("ceji_loss: iou_tar outside [0, 1]");
  }
  CejiTerm out;
  const bool clamped = p_cls < opts.eps || p_cls > 1.0;
  const double p = std::clamp(p_cls, opts.eps, 1.0);
  if (!is_positive) {
    out.value = -std::log(p);
    out.d_p_cls = clamped ? 0.0 : -1.0 / p;
    return out;
  }
  if (iou_tar.value < opts.iou_gate) {
    out.ignored = true;
    return out;
  }
  out.value = -std::log(p * iou_tar.value);
  out.d_p_cls = clamped ? 0.0 : -1.0 / p;
  if (opts.iou_tar_differentiable) {
    out.d_iou_tar = -1.0 / iou_tar.value;
    for (int i = 0; i < 4; ++i) {
      out.d_box[i] = out.d_iou_tar * iou_tar.grad_a[i];
    }
  }
  return out;
}

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Predictions Predictions::zeros(std::size_t anchors, std::size_t classes) {
  Predictions p;
  p.num_anchors = anchors;
  p.num_classes = classes;
  p.logits.assign(anchors * classes, 0.0);
  p.offsets.assign(anchors * 4, 0.0);
  p.iou_logits.assign(anchors, 0.0);
  return p;
}

void Predictions::validate() const {
  if (num_classes < 2) {
    throw std::invalid_argument("Predictions: need background plus at least one class");
  }
  if (logits.size() != num_anchors * num_classes || offsets.size() != num_anchors * 4 ||
      iou_logits.size() != num_anchors) {
    throw std::invalid_argument("Predictions: buffer sizes do not match dimensions");
  }
}

namespace {

// -ln softmax(z)_c clamped at -ln(eps); writes d/dz into `grad` (scaled by w) unless clamped.
double softmax_nll(const double* z, std::size_t n, std::size_t c, double eps, double w, double* grad) {
  const double zmax = *std::max_element(z, z + n);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sum += std::exp(z[k] - zmax);
  }
  const double lse = zmax + std::log(sum);
  const double nll = lse - z[c];
  const double cap = -std::log(eps);
  if (nll > cap) {
    return cap;
  }
  if (grad != nullptr && w != 0.0) {
    for (std::size_t k = 0; k < n; ++k) {
      grad[k] += w * (std::exp(z[k] - lse) - (k == c ? 1.0 : 0.0));
    }
  }
  return nll;
}

}  // namespace

LossResult total_loss(const AnchorSet& anchors, const MatchResult& matches, const Predictions& preds,
                      const std::vector<Box>& gt_boxes, const std::vector<int>& gt_classes,
                      const LossConfig& cfg) {
  preds.validate();
  const std::size_t n = preds.num_anchors;
  const std::size_t nc = preds.num_classes;
  if (anchors.size() != n || matches.labels.size() != n) {
    throw std::invalid_argument("total_loss: anchor, match and prediction counts differ");
  }
  if (gt_boxes.size() != gt_classes.size()) {
    throw std::invalid_argument("total_loss: gt boxes and classes differ in length");
  }

  LossResult res;
  res.gradient = Predictions::zeros(n, nc);
  auto& g = res.gradient;

  std::vector<std::size_t> negatives;
  for (std::size_t a = 0; a < n; ++a) {
    if (matches.labels[a] == MatchLabel::kPositive) {
      ++res.num_positive;
    } else if (matches.labels[a] == MatchLabel::kNegative) {
      negatives.push_back(a);
    }
  }

  // Background nll for every negative, used for mining.
  std::vector<double> neg_loss(negatives.size());
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    neg_loss[i] = softmax_nll(&preds.logits[negatives[i] * nc], nc, 0, cfg.eps, 0.0, nullptr);
  }
  std::vector<std::size_t> order(negatives.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t keep = negatives.size();
  if (res.num_positive > 0) {
    keep = std::min(negatives.size(), static_cast<std::size_t>(std::floor(cfg.neg_pos_ratio * res.num_positive)));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t l, std::size_t r) {
                        if (neg_loss[l] != neg_loss[r]) return neg_loss[l] > neg_loss[r];
                        return l < r;
                      });
    order.resize(keep);
    std::sort(order.begin(), order.end());
  }
  res.num_negative_used = keep;
  res.normalizer = res.num_positive > 0 ? static_cast<double>(res.num_positive) : static_cast<double>(std::max<std::size_t>(n, 1));
  const double inv_n = 1.0 / res.normalizer;

  double cls_sum = 0.0;
  double reg_sum = 0.0;
  double iou_sum = 0.0;

  for (std::size_t idx : order) {
    const std::size_t a = negatives[idx];
    cls_sum += softmax_nll(&preds.logits[a * nc], nc, 0, cfg.eps, inv_n, &g.logits[a * nc]);
  }

  for (std::size_t a = 0; a < n; ++a) {
    if (matches.labels[a] != MatchLabel::kPositive) {
      continue;
    }
    const int gi = matches.gt_index[a];
    if (gi < 0 || static_cast<std::size_t>(gi) >= gt_boxes.size()) {
      throw std::invalid_argument("total_loss: positive anchor references a missing gt");
    }
    const Box& gt = gt_boxes[static_cast<std::size_t>(gi)];
    const int cls = gt_classes[static_cast<std::size_t>(gi)];
    if (cls < 1 || static_cast<std::size_t>(cls) >= nc) {
      throw std::invalid_argument("total_loss: gt class outside [1, num_classes)");
    }
    const Box& anchor = anchors.boxes[a];
    const double* off = &preds.offsets[a * 4];
    const OffsetEncoding enc{off[0], off[1], off[2], off[3]};
    const Box decoded = decode(anchor, enc, cfg.variances);
    const IouValue iv = iou(decoded, gt);
    res.positive_iou_tar.push_back(iv.value);

    // regression
    const auto target = encode(anchor, gt, cfg.variances).as_array();
    for (int k = 0; k < 4; ++k) {
      const double x = off[k] - target[static_cast<std::size_t>(k)];
      const ScalarLoss l = cfg.reg == RegLoss::kBalanceL1 ? balance_l1(x, cfg.balance) : smooth_l1(x);
      reg_sum += l.value;
      g.offsets[a * 4 + static_cast<std::size_t>(k)] += inv_n * l.grad;
    }

    const bool gated_in = iv.value >= cfg.iou_gate;

    // classification
    if (cfg.cls == ClsLoss::kCe) {
      cls_sum += softmax_nll(&preds.logits[a * nc], nc, static_cast<std::size_t>(cls), cfg.eps, inv_n,
                             &g.logits[a * nc]);
    } else if (gated_in) {
      cls_sum += softmax_nll(&preds.logits[a * nc], nc, static_cast<std::size_t>(cls), cfg.eps, inv_n,
                             &g.logits[a * nc]);
      cls_sum += -std::log(iv.value);
      if (cfg.iou_tar_differentiable) {
        const auto jac = decode_jacobian(anchor, enc, cfg.variances);
        const double d_iou = -1.0 / iv.value;
        for (int c = 0; c < 4; ++c) {
          double acc = 0.0;
          for (int r = 0; r < 4; ++r) {
            acc += d_iou * iv.grad_a[static_cast<std::size_t>(r)] * jac[static_cast<std::size_t>(r * 4 + c)];
          }
          g.offsets[a * 4 + static_cast<std::size_t>(c)] += inv_n * acc;
        }
      }
    }

    // IOU head
    if (gated_in) {
      const double p = sigmoid(preds.iou_logits[a]);
      const IouLossTerm t = cfg.iou == IouLoss::kRIou ? r_iou_loss(p, iv.value, cfg.eps) : l2_iou_loss(p, iv.value);
      iou_sum += t.value;
      g.iou_logits[a] += inv_n * t.d_pred * p * (1.0 - p);
    }
  }

  res.cls = cls_sum * inv_n;
  res.reg = reg_sum * inv_n;
  res.iou = iou_sum * inv_n;
  res.total = res.cls + res.reg + res.iou;
  return res;
}

}  // namespace detkit
