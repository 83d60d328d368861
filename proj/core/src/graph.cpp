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

#include "detkit/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace detkit {

void ConvParams::validate() const {
  spec.validate();
  const Shape4 expect{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  if (!(weight.shape() == expect)) {
    throw std::invalid_argument("ConvParams '" + spec.name + "': weight dims " + to_string(weight.shape()) +
                                " do not match spec " + to_string(expect));
  }
  if (bias.size() != static_cast<std::size_t>(spec.out_channels)) {
    throw std::invalid_argument("ConvParams '" + spec.name + "': bias length mismatch");
  }
}

ConvParams ConvParams::zeros(const LayerSpec& spec) {
  spec.validate();
  return {spec, Tensor({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}),
          std::vector<double>(static_cast<std::size_t>(spec.out_channels), 0.0)};
}

ConvParams ConvParams::identity(const LayerSpec& spec) {
  if (spec.in_channels != spec.out_channels || spec.kernel % 2 == 0) {
    throw std::invalid_argument("ConvParams::identity: needs in == out channels and an odd kernel");
  }
  ConvParams p = zeros(spec);
  const int mid = spec.kernel / 2;
  for (int c = 0; c < spec.out_channels; ++c) {
    p.weight.at(c, c, mid, mid) = 1.0;
  }
  return p;
}

ConvParams ConvParams::uniform(const LayerSpec& spec, Rng& rng, double bound) {
  ConvParams p = zeros(spec);
  for (double& v : p.weight.data()) {
    v = rng.uniform(-bound, bound);
  }
  for (double& v : p.bias) {
    v = rng.uniform(-bound, bound);
  }
  return p;
}

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  p.validate();
  const auto& s = p.spec;
  const Shape4 in = x.shape();
  if (in.c != s.in_channels) {
    throw std::invalid_argument("conv2d '" + s.name + "': input has " + std::to_string(in.c) +
                                " channels, layer expects " + std::to_string(s.in_channels));
  }
  const int span = s.dilation * (s.kernel - 1) + 1;
  const int oh = (in.h + 2 * s.padding - span) / s.stride + 1;
  const int ow = (in.w + 2 * s.padding - span) / s.stride + 1;
  if (in.h + 2 * s.padding < span || in.w + 2 * s.padding < span) {
    throw std::invalid_argument("conv2d '" + s.name + "': kernel larger than padded input");
  }
  Tensor out({in.n, s.out_channels, oh, ow});
  const auto xs = x.data();
  auto ys = out.data();
  const auto ws = p.weight.data();

  // Accumulate one shifted input plane per (ic, kh, kw) tap into each output plane.
  for (int n = 0; n < in.n; ++n) {
    for (int oc = 0; oc < s.out_channels; ++oc) {
      double* yp = &ys[out.offset(n, oc, 0, 0)];
      std::fill(yp, yp + static_cast<std::size_t>(oh) * ow, p.bias[static_cast<std::size_t>(oc)]);
      for (int ic = 0; ic < in.c; ++ic) {
        const double* xp = &xs[x.offset(n, ic, 0, 0)];
        for (int kh = 0; kh < s.kernel; ++kh) {
          const int dy = kh * s.dilation - s.padding;
          // valid output rows: 0 <= r*stride + dy < in.h
          const int r_lo = dy >= 0 ? 0 : (-dy + s.stride - 1) / s.stride;
          const int r_hi = std::min(oh, (in.h - 1 - dy) >= 0 ? (in.h - 1 - dy) / s.stride + 1 : 0);
          for (int kw = 0; kw < s.kernel; ++kw) {
            const double wv = ws[p.weight.offset(oc, ic, kh, kw)];
            if (wv == 0.0) {
              continue;
            }
            const int dx = kw * s.dilation - s.padding;
            const int c_lo = dx >= 0 ? 0 : (-dx + s.stride - 1) / s.stride;
            const int c_hi = std::min(ow, (in.w - 1 - dx) >= 0 ? (in.w - 1 - dx) / s.stride + 1 : 0);
            for (int r = r_lo; r < r_hi; ++r) {
              const double* xrow = xp + static_cast<std::size_t>(r * s.stride + dy) * in.w;
              double* yrow = yp + static_cast<std::size_t>(r) * ow;
              if (s.stride == 1) {
                for (int c = c_lo; c < c_hi; ++c) {
                  yrow[c] += wv * xrow[c + dx];
                }
              } else {
                for (int c = c_lo; c < c_hi; ++c) {
                  yrow[c] += wv * xrow[c * s.stride + dx];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("bilinear_resize: output size must be >= 1");
  }
  const Shape4 in = x.shape();
  Tensor out({in.n, in.c, out_h, out_w});

  struct Tap {
    int i0;
    int i1;
    double t;
  };
  auto taps = [](int in_size, int out_size) {
    std::vector<Tap> v(static_cast<std::size_t>(out_size));
    const double scale = static_cast<double>(in_size) / out_size;
    for (int o = 0; o < out_size; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      src = std::max(src, 0.0);
      int i0 = std::min(static_cast<int>(std::floor(src)), in_size - 1);
      int i1 = std::min(i0 + 1, in_size - 1);
      v[static_cast<std::size_t>(o)] = {i0, i1, src - i0};
    }
    return v;
  };
  const auto ty = taps(in.h, out_h);
  const auto tx = taps(in.w, out_w);
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < in.c; ++c) {
      for (int i = 0; i < out_h; ++i) {
        const auto& a = ty[static_cast<std::size_t>(i)];
        for (int j = 0; j < out_w; ++j) {
          const auto& b = tx[static_cast<std::size_t>(j)];
          // lerp as v0 + t*(v1 - v0) so constant inputs stay exact
          const double top = x.at(n, c, a.i0, b.i0) + b.t * (x.at(n, c, a.i0, b.i1) - x.at(n, c, a.i0, b.i0));
          const double bot = x.at(n, c, a.i1, b.i0) + b.t * (x.at(n, c, a.i1, b.i1) - x.at(n, c, a.i1, b.i0));
          out.at(n, c, i, j) = top + a.t * (bot - top);
        }
      }
    }
  }
  return out;
}

Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w) {
  const Shape4 in = x.shape();
  if (out_h < 1 || out_w < 1 || out_h > in.h || out_w > in.w) {
    throw std::invalid_argument("adaptive_avg_pool: output must be within [1, input] per axis");
  }
  Tensor out({in.n, in.c, out_h, out_w});
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < in.c; ++c) {
      for (int i = 0; i < out_h; ++i) {
        const int h0 = (i * in.h) / out_h;
        const int h1 = ((i + 1) * in.h + out_h - 1) / out_h;
        for (int j = 0; j < out_w; ++j) {
          const int w0 = (j * in.w) / out_w;
          const int w1 = ((j + 1) * in.w + out_w - 1) / out_w;
          // running mean keeps constant windows exact
          double mean = 0.0;
          int k = 0;
          for (int h = h0; h < h1; ++h) {
            for (int w = w0; w < w1; ++w) {
              ++k;
              mean += (x.at(n, c, h, w) - mean) / k;
            }
          }
          out.at(n, c, i, j) = mean;
        }
      }
    }
  }
  return out;
}

namespace {

LayerSpec make_spec(std::string name, int in, int out, int k, int d) {
  LayerSpec s;
  s.name = std::move(name);
  s.kernel = k;
  s.dilation = d;
  s.padding = d * (k - 1) / 2;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

struct RfmSpecs {
  LayerSpec in, d1, d3, d5, out;
};

RfmSpecs rfm_specs(int in_channels, int mid_channels, int out_channels) {
  if (mid_channels % 4 != 0 || mid_channels < 4) {
    throw std::invalid_argument("RFM: channel count after the 1x1 conversion (" + std::to_string(mid_channels) +
                                ") must be a positive multiple of 4");
  }
  const int q = mid_channels / 4;
  return {make_spec("rfm_in", in_channels, mid_channels, 1, 1), make_spec("rfm_d1", q, q, 3, 1),
          make_spec("rfm_d3", q, q, 3, 3), make_spec("rfm_d5", q, q, 3, 5),
          make_spec("rfm_out", mid_channels, out_channels, 1, 1)};
}

}  // namespace

RfmWeights RfmWeights::uniform(int in_channels, int mid_channels, int out_channels, std::uint64_t seed,
                               double bound) {
  const auto s = rfm_specs(in_channels, mid_channels, out_channels);
  Rng rng(seed);
  RfmWeights w;
  w.conv_in = ConvParams::uniform(s.in, rng, bound);
  w.branch_d1 = ConvParams::uniform(s.d1, rng, bound);
  w.branch_d3 = ConvParams::uniform(s.d3, rng, bound);
  w.branch_d5 = ConvParams::uniform(s.d5, rng, bound);
  w.conv_out = ConvParams::uniform(s.out, rng, bound);
  return w;
}

RfmWeights RfmWeights::zeros(int in_channels, int mid_channels, int out_channels) {
  const auto s = rfm_specs(in_channels, mid_channels, out_channels);
  return {ConvParams::zeros(s.in), ConvParams::zeros(s.d1), ConvParams::zeros(s.d3), ConvParams::zeros(s.d5),
          ConvParams::zeros(s.out)};
}

std::vector<LayerSpec> RfmWeights::layer_specs() const {
  return {conv_in.spec, branch_d1.spec, branch_d3.spec, branch_d5.spec, conv_out.spec};
}

std::int64_t RfmWeights::params() const {
  std::int64_t total = 0;
  for (const auto* p : {&conv_in, &branch_d1, &branch_d3, &branch_d5, &conv_out}) {
    total += static_cast<std::int64_t>(p->weight.size());
  }
  return total;
}

void RfmWeights::validate() const {
  for (const auto* p : {&conv_in, &branch_d1, &branch_d3, &branch_d5, &conv_out}) {
    p->validate();
  }
  const int mid = conv_in.spec.out_channels;
  if (mid % 4 != 0) {
    throw std::invalid_argument("RFM: channel count after the 1x1 conversion must be divisible by 4");
  }
  const int q = mid / 4;
  for (const auto* p : {&branch_d1, &branch_d3, &branch_d5}) {
    if (p->spec.in_channels != q || p->spec.out_channels != q || p->spec.kernel != 3 ||
        p->spec.padding != p->spec.dilation || p->spec.stride != 1) {
      throw std::invalid_argument("RFM: branch '" + p->spec.name + "' must be a 3x3 same-size conv on " +
                                  std::to_string(q) + " channels");
    }
  }
  if (conv_out.spec.in_channels != mid || conv_out.spec.kernel != 1 || conv_in.spec.kernel != 1) {
    throw std::invalid_argument("RFM: 1x1 conversion/fusion layers are inconsistent");
  }
}

Tensor rfm_forward(const Tensor& x, const RfmWeights& w) {
  w.validate();
  const Tensor t = conv2d(x, w.conv_in);
  const int q = t.shape().c / 4;
  const Tensor x1 = t.channel_slice(0, q);
  const Tensor x2 = t.channel_slice(q, q);
  const Tensor x3 = t.channel_slice(2 * q, q);
  const Tensor x4 = t.channel_slice(3 * q, q);

  Tensor y2 = conv2d(x2, w.branch_d1);
  Tensor y3 = conv2d(y2 + x3, w.branch_d3);
  Tensor y4 = conv2d(y3 + x4, w.branch_d5);
  const Tensor parts[] = {x1, std::move(y2), std::move(y3), std::move(y4)};
  return conv2d(Tensor::concat_channels(parts), w.conv_out);
}

FpnWeights FpnWeights::uniform(std::span<const int> level_channels, int shallow_channels, std::uint64_t seed,
                               int flow_channels, int out_channels, double bound) {
  if (level_channels.size() != kPyramidLevels) {
    throw std::invalid_argument("FpnWeights: expected six level channel counts");
  }
  Rng rng(seed);
  FpnWeights w;
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    w.lateral[k] = ConvParams::uniform(
        make_spec("lateral" + std::to_string(k + 1), level_channels[k], flow_channels, 1, 1), rng, bound);
  }
  w.shallow_proj = ConvParams::uniform(make_spec("shallow_proj", shallow_channels, flow_channels, 1, 1), rng, bound);
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    w.output[k] = ConvParams::uniform(make_spec("output" + std::to_string(k + 1), flow_channels, out_channels, 3, 1),
                                      rng, bound);
  }
  return w;
}

std::vector<Tensor> two_way_fpn_forward(std::span<const Tensor> basic_maps, const Tensor& shallow_map,
                                        const FpnWeights& w) {
  if (basic_maps.size() != kPyramidLevels) {
    throw std::invalid_argument("two_way_fpn_forward: expected six basic maps");
  }
  const int batch = basic_maps[0].shape().n;
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    const auto& s = basic_maps[k].shape();
    if (s.n != batch) {
      throw std::invalid_argument("two_way_fpn_forward: batch size differs across levels");
    }
    if (k > 0) {
      const auto& prev = basic_maps[k - 1].shape();
      if (!(s.h < prev.h && s.w < prev.w)) {
        throw std::invalid_argument("two_way_fpn_forward: spatial sizes must strictly decrease, level " +
                                    std::to_string(k + 1) + " is " + to_string(s));
      }
    }
  }
  if (shallow_map.shape().n != batch || shallow_map.shape().h < basic_maps[0].shape().h ||
      shallow_map.shape().w < basic_maps[0].shape().w) {
    throw std::invalid_argument("two_way_fpn_forward: shallow map must cover level 1 spatially");
  }

  std::vector<Tensor> lateral;
  lateral.reserve(kPyramidLevels);
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    lateral.push_back(conv2d(basic_maps[k], w.lateral[k]));
  }

  // Top-down semantic flow over the first four levels.
  std::vector<Tensor> semantic(kSemanticLevels);
  semantic[kSemanticLevels - 1] = lateral[kSemanticLevels - 1];
  for (std::size_t k = kSemanticLevels - 1; k-- > 0;) {
    const auto& s = lateral[k].shape();
    semantic[k] = lateral[k] + bilinear_resize(semantic[k + 1], s.h, s.w);
  }

  // Bottom-up local flow from the shallow map.
  Tensor local = conv2d(shallow_map, w.shallow_proj);
  std::vector<Tensor> outputs;
  outputs.reserve(kPyramidLevels);
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    const auto& s = lateral[k].shape();
    local = adaptive_avg_pool(local, s.h, s.w);
    Tensor combined = (k < kSemanticLevels ? semantic[k] : lateral[k]) + local;
    outputs.push_back(conv2d(combined, w.output[k]));
  }
  return outputs;
}

}  // namespace detkit
