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

#include "detkit/rfcalc.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "detkit/error.hpp"

namespace detkit {

void LayerSpec::validate() const {
  if (kernel < 1 || stride < 1 || dilation < 1) {
    throw std::invalid_argument("LayerSpec '" + name + "': kernel, stride and dilation must be >= 1");
  }
  if (in_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("LayerSpec '" + name + "': channels must be >= 1");
  }
  if (padding < 0) {
    throw std::invalid_argument("LayerSpec '" + name + "': padding must be >= 0");
  }
}

std::int64_t LayerSpec::params() const {
  if (kind == LayerKind::kPool) {
    return 0;
  }
  return static_cast<std::int64_t>(kernel) * kernel * in_channels * out_channels;
}

RFState propagate(const RFState& state, const LayerSpec& layer) {
  return {state.rf + static_cast<std::int64_t>(layer.kernel - 1) * layer.dilation * state.jump,
          state.jump * layer.stride};
}

ChainAnalysis analyze_chain(const RFState& initial, const std::vector<LayerSpec>& layers,
                            std::optional<std::int64_t> input_size) {
  if (layers.empty()) {
    throw std::invalid_argument("analyze_chain: empty layer chain");
  }
  ChainAnalysis out;
  out.initial = initial;
  RFState s = initial;
  std::int64_t cum = 0;
  std::optional<std::int64_t> size = input_size;
  for (const auto& layer : layers) {
    layer.validate();
    s = propagate(s, layer);
    const std::int64_t p = layer.params();
    cum += p;
    if (size) {
      const std::int64_t eff = static_cast<std::int64_t>(layer.dilation) * (layer.kernel - 1) + 1;
      *size = (*size + 2 * layer.padding - eff) / layer.stride + 1;
      if (*size < 1) {
        throw std::invalid_argument("analyze_chain: layer '" + layer.name + "' collapses the spatial size");
      }
    }
    out.rows.push_back({layer, s, p, cum, size});
  }
  return out;
}

std::vector<TapRf> tapped_states(const ChainAnalysis& analysis) {
  std::vector<TapRf> taps;
  for (const auto& row : analysis.rows) {
    if (!row.layer.tap.empty()) {
      taps.push_back({row.layer.tap, row.state.rf});
    }
  }
  return taps;
}

std::vector<double> expansion_ratios(const ChainAnalysis& analysis) {
  const auto taps = tapped_states(analysis);
  std::vector<double> ratios;
  for (std::size_t i = 1; i < taps.size(); ++i) {
    ratios.push_back(static_cast<double>(taps[i].rf) / static_cast<double>(taps[i - 1].rf));
  }
  return ratios;
}

double ratio_spread(const std::vector<double>& ratios, std::size_t count) {
  const std::size_t n = count == 0 ? ratios.size() : std::min(count, ratios.size());
  if (n == 0) {
    throw std::invalid_argument("ratio_spread: no ratios");
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(n));
  return *hi / *lo;
}

namespace {

LayerSpec conv(std::string name, int in, int out, int k = 3, int s = 1, int d = 1, int pad = -1,
               std::string tap = {}) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::kConv;
  l.kernel = k;
  l.stride = s;
  l.dilation = d;
  l.padding = pad < 0 ? d * (k - 1) / 2 : pad;
  l.in_channels = in;
  l.out_channels = out;
  l.tap = std::move(tap);
  return l;
}

LayerSpec pool(std::string name, int channels, int k = 2, int s = 2, int pad = 0) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::kPool;
  l.kernel = k;
  l.stride = s;
  l.padding = pad;
  l.in_channels = l.out_channels = channels;
  return l;
}

std::vector<LayerSpec> extra_layers_chain(int extra_dilation) {
  return {
      conv("conv1_1", 3, 64),
      conv("conv1_2", 64, 64),
      pool("pool1", 64),
      conv("conv2_1", 64, 128),
      conv("conv2_2", 128, 128),
      pool("pool2", 128),
      conv("conv3_1", 128, 256),
      conv("conv3_2", 256, 256),
      conv("conv3_3", 256, 256),
      pool("pool3", 256),
      conv("conv4_1", 256, 512),
      conv("conv4_2", 512, 512),
      conv("conv4_3", 512, 512, 3, 1, 1, -1, "X1"),
      pool("pool4", 512),
      conv("conv5_1", 512, 512),
      conv("conv5_2", 512, 512),
      conv("conv5_3", 512, 512),
      pool("pool5", 512, 3, 1, 1),
      conv("conv6", 512, 1024, 3, 1, 6),
      conv("conv7", 1024, 1024, 1, 1, 1, -1, "X2"),
      conv("conv8_1", 1024, 256, 1),
      conv("conv8_2", 256, 512, 3, 2, extra_dilation, -1, "X3"),
      conv("conv9_1", 512, 128, 1),
      conv("conv9_2", 128, 256, 3, 2, extra_dilation, -1, "X4"),
      conv("conv10_1", 256, 128, 1),
      conv("conv10_2", 128, 256, 3, 1, 1, 0, "X5"),
      conv("conv11_1", 256, 128, 1),
      conv("conv11_2", 128, 256, 3, 1, 1, 0, "X6"),
  };
}

}  // namespace

std::vector<LayerSpec> ssd_extra_layers_chain() { return extra_layers_chain(1); }
std::vector<LayerSpec> dilated_extra_layers_chain() { return extra_layers_chain(2); }

std::vector<LayerSpec> builtin_chain(const std::string& name) {
  if (name == "ssd") {
    return ssd_extra_layers_chain();
  }
  if (name == "dilated") {
    return dilated_extra_layers_chain();
  }
  throw ConfigError("unknown built-in chain '" + name + "' (expected ssd or dilated)");
}

ChainDocument parse_chain_json(const std::string& text) {
  ChainDocument doc;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("layer chain JSON: ") + e.what());
  }
  try {
    if (j.contains("initial")) {
      doc.initial.rf = j["initial"].value("rf", std::int64_t{1});
      doc.initial.jump = j["initial"].value("jump", std::int64_t{1});
    }
    if (j.contains("input_size") && !j["input_size"].is_null()) {
      doc.input_size = j["input_size"].get<std::int64_t>();
    }
    for (const auto& l : j.at("layers")) {
      LayerSpec s;
      s.name = l.value("name", std::string{});
      const std::string kind = l.value("kind", std::string{"conv"});
      if (kind == "conv") {
        s.kind = LayerKind::kConv;
      } else if (kind == "pool") {
        s.kind = LayerKind::kPool;
      } else {
        throw ConfigError("layer '" + s.name + "': unknown kind '" + kind + "'");
      }
      s.kernel = l.value("kernel", 3);
      s.stride = l.value("stride", 1);
      s.dilation = l.value("dilation", 1);
      s.padding = l.value("padding", 0);
      s.in_channels = l.value("in_channels", 1);
      s.out_channels = l.value("out_channels", s.in_channels);
      s.tap = l.value("tap", std::string{});
      doc.layers.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("layer chain JSON: ") + e.what());
  }
  if (doc.initial.rf < 1 || doc.initial.jump < 1) {
    throw ConfigError("layer chain JSON: initial rf and jump must be >= 1");
  }
  for (const auto& l : doc.layers) {
    try {
      l.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  return doc;
}

std::string chain_to_json(const ChainDocument& doc) {
  nlohmann::json j;
  j["initial"] = {{"rf", doc.initial.rf}, {"jump", doc.initial.jump}};
  j["input_size"] = doc.input_size ? nlohmann::json(*doc.input_size) : nlohmann::json(nullptr);
  j["layers"] = nlohmann::json::array();
  for (const auto& l : doc.layers) {
    j["layers"].push_back({{"name", l.name},
                           {"kind", l.kind == LayerKind::kConv ? "conv" : "pool"},
                           {"kernel", l.kernel},
                           {"stride", l.stride},
                           {"dilation", l.dilation},
                           {"padding", l.padding},
                           {"in_channels", l.in_channels},
                           {"out_channels", l.out_channels},
                           {"tap", l.tap}});
  }
  return j.dump(2);
}

std::string analysis_to_csv(const ChainAnalysis& analysis) {
  std::ostringstream os;
  os << "name,kind,kernel,stride,dilation,padding,in_channels,out_channels,rf,jump,size,params,cumulative_params,tap\n";
  for (const auto& r : analysis.rows) {
    const auto& l = r.layer;
    os << l.name << ',' << (l.kind == LayerKind::kConv ? "conv" : "pool") << ',' << l.kernel << ',' << l.stride << ','
       << l.dilation << ',' << l.padding << ',' << l.in_channels << ',' << l.out_channels << ',' << r.state.rf << ','
       << r.state.jump << ',';
    if (r.spatial) {
      os << *r.spatial;
    }
    os << ',' << r.params << ',' << r.cumulative_params << ',' << l.tap << '\n';
  }
  return os.str();
}

}  // namespace detkit
