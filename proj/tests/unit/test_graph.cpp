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

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "detkit/graph.hpp"
#include "detkit/random.hpp"
#include "oracles/conv_fixtures.hpp"
#include "oracles/naive_conv2d.hpp"

namespace detkit {
namespace {

TEST(Conv2d, MatchesNestedLoopOracleOnFixtures) {
  Rng rng(41);
  for (const auto& f : oracle::conv_fixtures()) {
    const Tensor x = oracle::random_tensor(f.input, rng);
    const ConvParams p = ConvParams::uniform(f.spec, rng, 0.5);
    const Tensor got = conv2d(x, p);
    const Tensor want = oracle::naive_conv2d(x, p);
    ASSERT_EQ(got.shape(), want.shape()) << f.name;
    EXPECT_LE(got.max_abs_diff(want), 1e-10) << f.name;
  }
}

TEST(Conv2d, IdentityWeightsReproduceInput) {
  Rng rng(42);
  const Tensor x = oracle::random_tensor({1, 3, 6, 5}, rng);
  for (int d : {1, 3, 5}) {
    const ConvParams id = ConvParams::identity(oracle::conv_spec(3, 3, 3, 1, d, d));
    EXPECT_EQ(conv2d(x, id).max_abs_diff(x), 0.0) << d;
  }
}

TEST(Conv2d, OutputShapeArithmetic) {
  const Tensor x({1, 2, 10, 10});
  EXPECT_EQ(conv2d(x, ConvParams::zeros(oracle::conv_spec(2, 4, 3, 2, 1, 1))).shape(), (Shape4{1, 4, 5, 5}));
  EXPECT_EQ(conv2d(x, ConvParams::zeros(oracle::conv_spec(2, 4, 3, 1, 2, 0))).shape(), (Shape4{1, 4, 6, 6}));
}

TEST(Conv2d, ChannelMismatchAndEmptyOutputThrow) {
  const Tensor x({1, 2, 4, 4});
  EXPECT_THROW(conv2d(x, ConvParams::zeros(oracle::conv_spec(3, 1, 1, 1, 1, 0))), std::invalid_argument);
  EXPECT_THROW(conv2d(x, ConvParams::zeros(oracle::conv_spec(2, 1, 3, 1, 3, 0))), std::invalid_argument);
}

TEST(Bilinear, HalfPixelValues) {
  const Tensor x({1, 1, 2, 2}, {0, 1, 2, 3});
  const Tensor y = bilinear_resize(x, 4, 4);
  const double row0[] = {0.0, 0.25, 0.75, 1.0};
  const double col0[] = {0.0, 0.5, 1.5, 2.0};
  for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(y.at(0, 0, 0, j), row0[j]);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y.at(0, 0, i, 0), col0[i]);
}

TEST(Bilinear, ConstantsStayExactAndSameSizeIsIdentity) {
  const Tensor c({1, 2, 3, 5}, 0.1);
  const Tensor up = bilinear_resize(c, 7, 11);
  for (double v : up.data()) ASSERT_EQ(v, 0.1);
  Rng rng(43);
  const Tensor x = oracle::random_tensor({1, 2, 4, 3}, rng);
  EXPECT_EQ(bilinear_resize(x, 4, 3).max_abs_diff(x), 0.0);
}

TEST(AdaptivePool, ExactHalvingIsTwoByTwoMean) {
  const Tensor x({1, 1, 2, 4}, {1, 3, 5, 7, 2, 4, 6, 8});
  const Tensor y = adaptive_avg_pool(x, 1, 2);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 2.5);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 6.5);
}

TEST(AdaptivePool, OverlappingWindows) {
  // 5 -> 3 windows: [0, 2), [1, 4), [3, 5).
  const Tensor x({1, 1, 1, 5}, {1, 2, 3, 4, 5});
  const Tensor y = adaptive_avg_pool(x, 1, 3);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 1.5);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 3.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 2), 4.5);
  EXPECT_THROW(adaptive_avg_pool(x, 1, 6), std::invalid_argument);
}

// RFM probe: identity projections with selectable identity branches.
RfmWeights probe_weights(int c, bool d1, bool d3, bool d5) {
  RfmWeights w = RfmWeights::zeros(c, c, c);
  w.conv_in = ConvParams::identity(w.conv_in.spec);
  w.conv_out = ConvParams::identity(w.conv_out.spec);
  if (d1) w.branch_d1 = ConvParams::identity(w.branch_d1.spec);
  if (d3) w.branch_d3 = ConvParams::identity(w.branch_d3.spec);
  if (d5) w.branch_d5 = ConvParams::identity(w.branch_d5.spec);
  return w;
}

TEST(Rfm, IdentityProbesExposeWiring) {
  Rng rng(44);
  const int c = 8, q = 2;
  const Tensor x = oracle::random_tensor({1, c, 6, 7}, rng);
  const Tensor x1 = x.channel_slice(0, q), x2 = x.channel_slice(q, q), x3 = x.channel_slice(2 * q, q),
               x4 = x.channel_slice(3 * q, q);
  const Tensor zero({1, q, 6, 7});

  // Only the identity group passes.
  {
    const Tensor y = rfm_forward(x, probe_weights(c, false, false, false));
    EXPECT_EQ(y.channel_slice(0, q).max_abs_diff(x1), 0.0);
    for (int g = 1; g < 4; ++g) EXPECT_EQ(y.channel_slice(g * q, q).max_abs_diff(zero), 0.0);
  }
  // Y2 = X2, Y3 = d3(Y2 + X3) = 0.
  {
    const Tensor y = rfm_forward(x, probe_weights(c, true, false, false));
    EXPECT_EQ(y.channel_slice(q, q).max_abs_diff(x2), 0.0);
    EXPECT_EQ(y.channel_slice(2 * q, q).max_abs_diff(zero), 0.0);
  }
  // All identity: Y3 = X2 + X3, Y4 = X2 + X3 + X4.
  {
    const Tensor y = rfm_forward(x, probe_weights(c, true, true, true));
    EXPECT_EQ(y.channel_slice(0, q).max_abs_diff(x1), 0.0);
    EXPECT_EQ(y.channel_slice(q, q).max_abs_diff(x2), 0.0);
    EXPECT_LE(y.channel_slice(2 * q, q).max_abs_diff(x2 + x3), 1e-15);
    EXPECT_LE(y.channel_slice(3 * q, q).max_abs_diff(x2 + x3 + x4), 1e-15);
  }
  // Without the d1 branch, X3 reaches Y4 but X2 does not.
  {
    const Tensor y = rfm_forward(x, probe_weights(c, false, true, true));
    EXPECT_LE(y.channel_slice(3 * q, q).max_abs_diff(x3 + x4), 1e-15);
  }
}

TEST(Rfm, PreservesSpatialDims) {
  Rng rng(45);
  for (const auto& s : {Shape4{1, 4, 1, 1}, Shape4{2, 4, 5, 9}, Shape4{1, 4, 16, 16}}) {
    const Tensor x = oracle::random_tensor(s, rng);
    const Tensor y = rfm_forward(x, RfmWeights::uniform(4, 8, 6, 7));
    EXPECT_EQ(y.shape(), (Shape4{s.n, 6, s.h, s.w}));
  }
}

TEST(Rfm, ImpulseResponseSpansNineteenPixels) {
  // 1 + 2 * (1 + 3 + 5) = 19 through the d1 -> d3 -> d5 chain.
  RfmWeights w = RfmWeights::uniform(1, 4, 1, 46);
  for (ConvParams* p : {&w.conv_in, &w.branch_d1, &w.branch_d3, &w.branch_d5, &w.conv_out}) {
    for (double& v : p->weight.data()) v = std::abs(v) + 0.01;
    for (double& b : p->bias) b = 0.0;
  }
  const int n = 41, mid = 20;
  Tensor x({1, 1, n, n});
  x.at(0, 0, mid, mid) = 1.0;
  const Tensor y = rfm_forward(x, w);
  int lo = n, hi = -1;
  for (int j = 0; j < n; ++j) {
    if (y.at(0, 0, mid, j) != 0.0) {
      lo = std::min(lo, j);
      hi = std::max(hi, j);
    }
  }
  EXPECT_EQ(hi - lo + 1, 19);
  EXPECT_EQ(lo, mid - 9);
}

TEST(Rfm, ParameterCountAndValidation) {
  const RfmWeights w = RfmWeights::uniform(16, 8, 16, 1);
  EXPECT_EQ(w.params(), 16 * 8 + 3 * 9 * 2 * 2 + 8 * 16);
  EXPECT_THROW(RfmWeights::zeros(16, 6, 16), std::invalid_argument);
}

std::vector<Tensor> pyramid(const std::array<int, 6>& sides, int channels, Rng& rng) {
  std::vector<Tensor> maps;
  for (int s : sides) maps.push_back(oracle::random_tensor({1, channels, s, s}, rng));
  return maps;
}

TEST(TwoWayFpn, EmitsSixMapsAtPyramidResolutions) {
  Rng rng(47);
  const std::array<int, 6> sides{12, 6, 4, 3, 2, 1};
  const auto maps = pyramid(sides, 3, rng);
  const Tensor shallow = oracle::random_tensor({1, 2, 24, 24}, rng);
  const int channels[] = {3, 3, 3, 3, 3, 3};
  const FpnWeights w = FpnWeights::uniform(channels, 2, 9);
  const auto out = two_way_fpn_forward(maps, shallow, w);
  ASSERT_EQ(out.size(), 6u);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(out[k].shape(), (Shape4{1, kFpnOutChannels, sides[k], sides[k]}));
  }
  EXPECT_EQ(w.flow_channels(), kFlowChannels);
}

TEST(TwoWayFpn, ConstantProbeShowsBothFlows) {
  // Identity weights at two channels: level k sees the sum of laterals
  // k..4 (semantic flow, levels 1-4 only) plus the shallow constant.
  const std::array<int, 6> sides{40, 20, 10, 5, 3, 1};
  const double v[] = {1, 2, 4, 8, 16, 32};
  const double u = 100;
  std::vector<Tensor> maps;
  for (std::size_t k = 0; k < 6; ++k) maps.emplace_back(Shape4{1, 2, sides[k], sides[k]}, v[k]);
  const Tensor shallow({1, 2, 80, 80}, u);
  const int channels[] = {2, 2, 2, 2, 2, 2};
  FpnWeights w = FpnWeights::uniform(channels, 2, 3, 2, 2);
  for (auto& p : w.lateral) p = ConvParams::identity(p.spec);
  for (auto& p : w.output) p = ConvParams::identity(p.spec);
  w.shallow_proj = ConvParams::identity(w.shallow_proj.spec);
  const auto out = two_way_fpn_forward(maps, shallow, w);
  const double expect[] = {1 + 2 + 4 + 8 + u, 2 + 4 + 8 + u, 4 + 8 + u, 8 + u, 16 + u, 32 + u};
  for (std::size_t k = 0; k < 6; ++k) {
    for (double x : out[k].data()) ASSERT_EQ(x, expect[k]) << "level " << k + 1;
  }
}

TEST(TwoWayFpn, RejectsBadPyramids) {
  Rng rng(48);
  const int channels[] = {2, 2, 2, 2, 2, 2};
  const FpnWeights w = FpnWeights::uniform(channels, 2, 1, 4, 4);
  const Tensor shallow({1, 2, 16, 16});
  auto five = pyramid({8, 4, 3, 2, 1, 1}, 2, rng);
  five.pop_back();
  EXPECT_THROW(two_way_fpn_forward(five, shallow, w), std::invalid_argument);
  EXPECT_THROW(two_way_fpn_forward(pyramid({8, 4, 3, 2, 1, 1}, 2, rng), shallow, w), std::invalid_argument);
  EXPECT_THROW(two_way_fpn_forward(pyramid({8, 6, 4, 3, 2, 1}, 2, rng), Tensor({1, 2, 4, 4}), w),
               std::invalid_argument);
}

}  // namespace
}  // namespace detkit
