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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace detkit {

enum class LayerKind { kConv, kPool };

/// Hyper-parameters of one convolution (or pooling window) in a chain.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int padding = 0;
  int in_channels = 1;
  int out_channels = 1;
  /// Label of the feature map this layer produces, e.g. "X1"; empty if none.
  std::string tap;

  void validate() const;
  /// k^2 * in * out for convolutions, 0 for pooling. Bias is not counted.
  std::int64_t params() const;
};

/// Receptive field and jump (input pixels per output cell).
struct RFState {
  std::int64_t rf = 1;
  std::int64_t jump = 1;

  friend bool operator==(const RFState&, const RFState&) = default;
};

/// r' = r + (k - 1) * d * j, j' = j * s.
RFState propagate(const RFState& state, const LayerSpec& layer);

struct ChainRow {
  LayerSpec layer;
  RFState state;
  std::int64_t params = 0;
  std::int64_t cumulative_params = 0;
  std::optional<std::int64_t> spatial;  // output size when an input size was given
};

struct ChainAnalysis {
  RFState initial;
  std::vector<ChainRow> rows;

  std::int64_t total_params() const { return rows.empty() ? 0 : rows.back().cumulative_params; }
  RFState final_state() const { return rows.empty() ? initial : rows.back().state; }
};

/// Throws std::invalid_argument on an empty chain or invalid layer.
ChainAnalysis analyze_chain(const RFState& initial, const std::vector<LayerSpec>& layers,
                            std::optional<std::int64_t> input_size = std::nullopt);

struct TapRf {
  std::string tap;
  std::int64_t rf = 0;
};

std::vector<TapRf> tapped_states(const ChainAnalysis& analysis);

/// rf(tap_{i+1}) / rf(tap_i) for consecutive taps.
std::vector<double> expansion_ratios(const ChainAnalysis& analysis);

/// max / min over the first `count` expansion ratios (all if count == 0).
double ratio_spread(const std::vector<double>& ratios, std::size_t count = 0);

/// SSD extra layers on a VGG16 trunk, conv1_1 through conv11_2, taps X1..X6.
std::vector<LayerSpec> ssd_extra_layers_chain();
/// The redesigned variant: conv8_2 and conv9_2 use stride-2 3x3, dilation 2.
std::vector<LayerSpec> dilated_extra_layers_chain();

/// Built-in chains by name: "ssd" and "dilated".
std::vector<LayerSpec> builtin_chain(const std::string& name);

/// JSON: {"initial": {"rf": 1, "jump": 1}, "input_size": 320,
///        "layers": [{"name", "kind", "kernel", "stride", "dilation",
///                    "padding", "in_channels", "out_channels", "tap"}]}
struct ChainDocument {
  RFState initial;
  std::optional<std::int64_t> input_size;
  std::vector<LayerSpec> layers;
};

ChainDocument parse_chain_json(const std::string& text);
std::string chain_to_json(const ChainDocument& doc);
std::string analysis_to_csv(const ChainAnalysis& analysis);

}  // namespace detkit
