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

#include "detkit/plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "detkit/io.hpp"

namespace detkit {

Histogram Histogram::build(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0 || !(hi > lo)) {
    throw std::invalid_argument("Histogram: need at least one bin and hi > lo");
  }
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double v : values) {
    if (std::isnan(v)) {
      continue;
    }
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

std::size_t Histogram::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

namespace {

constexpr double kWidth = 480.0;
constexpr double kHeight = 360.0;
constexpr double kMargin = 48.0;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void open_svg(std::ostringstream& os, const PlotLabels& labels) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(labels.title)
     << "</text>\n"
     << "<line class=\"axis\" x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin
     << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n"
     << "<line class=\"axis\" x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
     << kHeight - kMargin << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << escape(labels.x_label) << "</text>\n"
     << "<text x=\"14\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
     << kHeight / 2 << ")\">" << escape(labels.y_label) << "</text>\n";
}

}  // namespace

std::string scatter_svg(std::span<const ScatterPoint> points, const PlotLabels& labels) {
  double xmax = 1.0;
  double ymax = 1.0;
  double xmin = 0.0;
  double ymin = 0.0;
  for (const auto& p : points) {
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, p.y);
    xmin = std::min(xmin, p.x);
    ymin = std::min(ymin, p.y);
  }
  const double pw = kWidth - 2 * kMargin;
  const double ph = kHeight - 2 * kMargin;
  std::ostringstream os;
  open_svg(os, labels);
  os << "<g class=\"points\" fill=\"steelblue\" fill-opacity=\"0.5\">\n";
  for (const auto& p : points) {
    const double x = kMargin + (p.x - xmin) / (xmax - xmin) * pw;
    const double y = kHeight - kMargin - (p.y - ymin) / (ymax - ymin) * ph;
    os << "<circle cx=\"" << format_double(x) << "\" cy=\"" << format_double(y) << "\" r=\"2\"/>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

std::string histogram_svg(const Histogram& h, const PlotLabels& labels) {
  const std::size_t peak = h.counts.empty() ? 0 : *std::max_element(h.counts.begin(), h.counts.end());
  const double pw = kWidth - 2 * kMargin;
  const double ph = kHeight - 2 * kMargin;
  const double bw = h.counts.empty() ? 0.0 : pw / static_cast<double>(h.counts.size());
  std::ostringstream os;
  open_svg(os, labels);
  os << "<g class=\"bars\" fill=\"darkorange\">\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double bh = peak == 0 ? 0.0 : ph * static_cast<double>(h.counts[i]) / static_cast<double>(peak);
    os << "<rect class=\"bar\" x=\"" << format_double(kMargin + bw * static_cast<double>(i)) << "\" y=\""
       << format_double(kHeight - kMargin - bh) << "\" width=\"" << format_double(bw) << "\" height=\""
       << format_double(bh) << "\" data-count=\"" << h.counts[i] << "\"/>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace detkit
