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

#include "detkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace detkit {

Box Box::make(double x1, double y1, double x2, double y2) {
  Box b{x1, y1, x2, y2};
  if (!b.valid()) {
    throw std::invalid_argument("Box: negative extent or non-finite coordinate");
  }
  return b;
}

Box Box::from_center(double cx, double cy, double w, double h) {
  return make(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
}

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) && x2 >= x1 && y2 >= y1;
}

Box Box::clipped(double w, double h) const {
  auto clamp = [](double v, double hi) { return std::clamp(v, 0.0, hi); };
  return {clamp(x1, w), clamp(y1, h), clamp(x2, w), clamp(y2, h)};
}

namespace {

// Derivative share of `v` in max(v, other) / min(v, other).
double max_share(double v, double other) { return v > other ? 1.0 : (v == other ? 0.5 : 0.0); }
double min_share(double v, double other) { return v < other ? 1.0 : (v == other ? 0.5 : 0.0); }

// Gradient of IOU w.r.t. the coordinates of `self` given the partner box.
std::array<double, 4> iou_grad_one(const Box& self, const Box& other, double iw, double ih, double inter,
                                   double uni) {
  const double w = self.width();
  const double h = self.height();
  // dI/dcoord for (x1, y1, x2, y2).
  const std::array<double, 4> d_inter = {
      -ih * max_share(self.x1, other.x1),
      -iw * max_share(self.y1, other.y1),
      ih * min_share(self.x2, other.x2),
      iw * min_share(self.y2, other.y2),
  };
  const std::array<double, 4> d_area = {-h, -w, h, w};
  std::array<double, 4> g{};
  const double inv_u2 = 1.0 / (uni * uni);
  for (int i = 0; i < 4; ++i) {
    // d(I/U) with dU = dA - dI.
    g[i] = (d_inter[i] * (uni + inter) - inter * d_area[i]) * inv_u2;
  }
  return g;
}

}  // namespace

double iou_value(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) {
    return 0.0;
  }
  return inter / uni;
}

IouValue iou(const Box& a, const Box& b) {
  IouValue out;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) {
    return out;
  }
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) {
    return out;
  }
  out.value = inter / uni;
  out.grad_a = iou_grad_one(a, b, iw, ih, inter, uni);
  out.grad_b = iou_grad_one(b, a, iw, ih, inter, uni);
  return out;
}

namespace {

void require_anchor(const Box& anchor) {
  if (!(anchor.width() > 0.0) || !(anchor.height() > 0.0) || !anchor.valid()) {
    throw std::invalid_argument("invalid anchor: width and height must be strictly positive");
  }
}

}  // namespace

OffsetEncoding encode(const Box& anchor, const Box& gt, const Variances& var) {
  require_anchor(anchor);
  if (!(gt.width() > 0.0) || !(gt.height() > 0.0) || !gt.valid()) {
    throw std::invalid_argument("encode: ground-truth box must have positive extent");
  }
  OffsetEncoding t;
  t.t_cx = (gt.cx() - anchor.cx()) / (var.center * anchor.width());
  t.t_cy = (gt.cy() - anchor.cy()) / (var.center * anchor.height());
  t.t_w = std::log(gt.width() / anchor.width()) / var.size;
  t.t_h = std::log(gt.height() / anchor.height()) / var.size;
  return t;
}

Box decode(const Box& anchor, const OffsetEncoding& off, const Variances& var) {
  require_anchor(anchor);
  const double aw = anchor.width();
  const double ah = anchor.height();
  const double cx = anchor.cx() + off.t_cx * var.center * aw;
  const double cy = anchor.cy() + off.t_cy * var.center * ah;
  const double w = aw * std::exp(off.t_w * var.size);
  const double h = ah * std::exp(off.t_h * var.size);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::array<double, 16> decode_jacobian(const Box& anchor, const OffsetEncoding& off, const Variances& var) {
  require_anchor(anchor);
  const double aw = anchor.width();
  const double ah = anchor.height();
  const double dcx = var.center * aw;
  const double dcy = var.center * ah;
  const double dw = 0.5 * var.size * aw * std::exp(off.t_w * var.size);
  const double dh = 0.5 * var.size * ah * std::exp(off.t_h * var.size);
  // rows: x1, y1, x2, y2; cols: t_cx, t_cy, t_w, t_h
  return {
      dcx, 0.0, -dw, 0.0,  //
      0.0, dcy, 0.0, -dh,  //
      dcx, 0.0, dw,  0.0,  //
      0.0, dcy, 0.0, dh,
  };
}

}  // namespace detkit
