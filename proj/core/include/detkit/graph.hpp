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
#include <cstdint>
#include <span>
#include <vector>

#include "detkit/random.hpp"
#include "detkit/rfcalc.hpp"
#include "detkit/tensor.hpp"

namespace detkit {

struct ConvParams {
  LayerSpec spec;
  Tensor weight;  // (out_channels, in_channels, kernel, kernel)
  std::vector<double> bias;

  void validate() const;

  static ConvParams zeros(const LayerSpec& spec);
  /// Center-tap identity; requires in_channels == out_channels and odd kernel.
  static ConvParams identity(const LayerSpec& spec);
  /// Weights and bias uniform in [-bound, bound].
  static ConvParams uniform(const LayerSpec& spec, Rng& rng, double bound = 0.05);
};

/// Cross-correlation with stride, dilation and symmetric zero padding.
/// Throws std::invalid_argument on a channel mismatch or empty output.
Tensor conv2d(const Tensor& x, const ConvParams& p);

/// Bilinear resize, half-pixel centers (align_corners = false).
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

/// Average pooling over adaptive windows [floor(i*H/o), ceil((i+1)*H/o)).
/// Equals a 2x2 stride-2 pool when the size halves exactly.
Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w);

/// Receptive-field expansion block: 1x1 conversion, four-way channel split,
/// identity / d1 / d3 / d5 branches chained residually, concat, 1x1 fusion.
struct RfmWeights {
  ConvParams conv_in;
  ConvParams branch_d1;
  ConvParams branch_d3;
  ConvParams branch_d5;
  ConvParams conv_out;

  /// mid_channels must be divisible by 4.
  static RfmWeights uniform(int in_channels, int mid_channels, int out_channels, std::uint64_t seed,
                            double bound = 0.05);
  static RfmWeights zeros(int in_channels, int mid_channels, int out_channels);

  std::vector<LayerSpec> layer_specs() const;
  std::int64_t params() const;
  void validate() const;
};

Tensor rfm_forward(const Tensor& x, const RfmWeights& w);

inline constexpr int kFlowChannels = 256;
inline constexpr int kFpnOutChannels = 512;
inline constexpr std::size_t kPyramidLevels = 6;

/// Two-way FPN weights. Levels 1..4 receive the top-down semantic flow; all
/// six receive the bottom-up local flow from the shallow map.
struct FpnWeights {
  std::array<ConvParams, kPyramidLevels> lateral;  // 1x1, level channels -> flow
  ConvParams shallow_proj;                          // 1x1, shallow channels -> flow
  std::array<ConvParams, kPyramidLevels> output;    // 3x3 pad 1, flow -> out

  static FpnWeights uniform(std::span<const int> level_channels, int shallow_channels, std::uint64_t seed,
                            int flow_channels = kFlowChannels, int out_channels = kFpnOutChannels,
                            double bound = 0.05);
  int flow_channels() const { return shallow_proj.spec.out_channels; }
};

inline constexpr std::size_t kSemanticLevels = 4;

std::vector<Tensor> two_way_fpn_forward(std::span<const Tensor> basic_maps, const Tensor& shallow_map,
                                        const FpnWeights& w);

}  // namespace detkit
