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
#include <span>
#include <string>
#include <vector>

namespace detkit {

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Fixed-width bins over [lo, hi]; values equal to hi land in the last bin,
/// values outside are clamped into the end bins.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;

  static Histogram build(std::span<const double> values, std::size_t bins, double lo = 0.0, double hi = 1.0);
  std::size_t total() const;
  double bin_lo(std::size_t i) const { return lo + (hi - lo) * static_cast<double>(i) / counts.size(); }
  double bin_hi(std::size_t i) const { return lo + (hi - lo) * static_cast<double>(i + 1) / counts.size(); }
};

struct PlotLabels {
  std::string title;
  std::string x_label;
  std::string y_label;
};

/// One <circle> per point, axes spanning [0, 1] on both axes unless points
/// fall outside.
std::string scatter_svg(std::span<const ScatterPoint> points, const PlotLabels& labels);
/// One <rect class="bar"> per bin.
std::string histogram_svg(const Histogram& h, const PlotLabels& labels);

}  // namespace detkit
