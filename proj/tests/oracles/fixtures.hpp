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

#include <algorithm>
#include <array>
#include <cmath>

#include "detkit/geometry.hpp"
#include "detkit/random.hpp"

namespace detkit::oracle {

inline Box random_box(Rng& rng, double lo = 0.0, double hi = 100.0, double min_side = 1.0) {
  const double w = rng.uniform(min_side, (hi - lo) / 2.0);
  const double h = rng.uniform(min_side, (hi - lo) / 2.0);
  const double x1 = rng.uniform(lo, hi - w);
  const double y1 = rng.uniform(lo, hi - h);
  return {x1, y1, x1 + w, y1 + h};
}

// True when no x-coordinate of a is within `gap` of one of b (and likewise
// for y), so a finite-difference stencil never straddles a min/max kink.
inline bool generic_position(const Box& a, const Box& b, double gap) {
  const double ax[] = {a.x1, a.x2}, bx[] = {b.x1, b.x2}, ay[] = {a.y1, a.y2}, by[] = {b.y1, b.y2};
  for (double u : ax) {
    for (double v : bx) {
      if (std::abs(u - v) < gap) return false;
    }
  }
  for (double u : ay) {
    for (double v : by) {
      if (std::abs(u - v) < gap) return false;
    }
  }
  return true;
}

// An overlapping pair in generic position.
inline std::array<Box, 2> random_overlapping_pair(Rng& rng, double gap = 1e-3) {
  for (;;) {
    const Box a = random_box(rng);
    const Box b = random_box(rng);
    if (iou_value(a, b) > 0.05 && generic_position(a, b, gap)) return {a, b};
  }
}

inline Box with_coord(Box b, int i, double v) {
  (i == 0 ? b.x1 : i == 1 ? b.y1 : i == 2 ? b.x2 : b.y2) = v;
  return b;
}

}  // namespace detkit::oracle
