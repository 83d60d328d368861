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

namespace detkit {

/// Axis-aligned rectangle stored in corner form (x1, y1) - (x2, y2).
/// Zero-area boxes are valid; negative extents are not.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  /// Validating constructor. Throws std::invalid_argument on negative extent
  /// or non-finite coordinates.
  static Box make(double x1, double y1, double x2, double y2);
  static Box from_center(double cx, double cy, double w, double h);

  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  bool valid() const;
  Box translated(double dx, double dy) const { return {x1 + dx, y1 + dy, x2 + dx, y2 + dy}; }
  Box scaled(double s) const { return {x1 * s, y1 * s, x2 * s, y2 * s}; }
  Box clipped(double width, double height) const;

  std::array<double, 4> coords() const { return {x1, y1, x2, y2}; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Intersection-over-union with its partial derivatives.
/// grad_a[i] = d value / d a.coords()[i], likewise grad_b.
struct IouValue {
  double value = 0.0;
  std::array<double, 4> grad_a{};
  std::array<double, 4> grad_b{};
};

/// Exact IOU with analytic gradient. Touching or disjoint boxes have zero
/// gradient; ties inside min/max split the derivative evenly between the two
/// tied coordinates, so iou(a, a) has zero gradient.
IouValue iou(const Box& a, const Box& b);

/// Value only; same arithmetic as iou(a, b).value.
double iou_value(const Box& a, const Box& b);

/// SSD variance constants applied to the (cx, cy, w, h) targets.
struct Variances {
  double center = 0.1;
  double size = 0.2;
};

/// Regression targets relative to an anchor, in SSD convention.
struct OffsetEncoding {
  double t_cx = 0.0;
  double t_cy = 0.0;
  double t_w = 0.0;
  double t_h = 0.0;

  std::array<double, 4> as_array() const { return {t_cx, t_cy, t_w, t_h}; }
  static OffsetEncoding from_array(const std::array<double, 4>& t) { return {t[0], t[1], t[2], t[3]}; }
};

/// Throws std::invalid_argument if the anchor has non-positive width or height
/// or if gt has zero width/height (log of zero).
OffsetEncoding encode(const Box& anchor, const Box& gt, const Variances& var = {});

/// Throws std::invalid_argument if the anchor has non-positive width or height.
Box decode(const Box& anchor, const OffsetEncoding& off, const Variances& var = {});

/// d decode(anchor, off).coords()[r] / d off.as_array()[c], row-major 4x4.
std::array<double, 16> decode_jacobian(const Box& anchor, const OffsetEncoding& off, const Variances& var = {});

}  // namespace detkit
