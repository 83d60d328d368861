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

#include <benchmark/benchmark.h>

#include <vector>

#include "detkit/eval.hpp"
#include "detkit/geometry.hpp"
#include "detkit/graph.hpp"
#include "detkit/nms.hpp"
#include "detkit/random.hpp"

namespace {

using namespace detkit;

Box random_box(Rng& rng, double extent) {
  const double x = rng.uniform(0, extent), y = rng.uniform(0, extent);
  return {x, y, x + rng.uniform(4, 64), y + rng.uniform(4, 64)};
}

std::vector<Detection> random_detections(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Detection> out(n);
  for (auto& d : out) {
    d.class_id = 1 + static_cast<int>(rng.uniform_int(0, 2));
    d.box = random_box(rng, 256);
    d.p_cls = rng.uniform(0.01, 1.0);
    d.p_iou = rng.uniform();
  }
  return out;
}

void BM_IouWithGradient(benchmark::State& state) {
  Rng rng(1);
  const Box a = random_box(rng, 32), b = random_box(rng, 32);
  for (auto _ : state) benchmark::DoNotOptimize(iou(a, b));
}
BENCHMARK(BM_IouWithGradient);

void BM_GreedyNms(benchmark::State& state) {
  const auto dets = random_detections(static_cast<std::size_t>(state.range(0)), 2);
  NmsOptions opts;
  opts.mode = state.range(1) ? ScoreMode::kIouGuided : ScoreMode::kStandard;
  for (auto _ : state) benchmark::DoNotOptimize(greedy_nms_indices(dets, opts));
}
BENCHMARK(BM_GreedyNms)->ArgsProduct({{100, 1000, 4000}, {0, 1}});

void BM_Conv2d(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  Rng rng(3);
  LayerSpec spec;
  spec.kernel = 3;
  spec.padding = 1;
  spec.in_channels = spec.out_channels = 16;
  const ConvParams p = ConvParams::uniform(spec, rng);
  Tensor x({1, 16, side, side});
  for (auto& v : x.data()) v = rng.uniform(-1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
}
BENCHMARK(BM_Conv2d)->Arg(20)->Arg(40);

void BM_Evaluate(benchmark::State& state) {
  const std::size_t images = 20;
  Rng rng(4);
  std::vector<GroundTruth> gts;
  std::vector<std::int64_t> ids;
  for (std::size_t i = 0; i < images; ++i) {
    ids.push_back(static_cast<std::int64_t>(i));
    for (int k = 0; k < 5; ++k) {
      gts.push_back({static_cast<std::int64_t>(i), 1 + static_cast<int>(rng.uniform_int(0, 2)), random_box(rng, 256)});
    }
  }
  auto dets = random_detections(static_cast<std::size_t>(state.range(0)), 5);
  for (std::size_t i = 0; i < dets.size(); ++i) dets[i].image_id = static_cast<std::int64_t>(i % images);
  const auto scored = to_scored(dets, ScoreMode::kStandard);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(scored, gts, ids));
}
BENCHMARK(BM_Evaluate)->Arg(500)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
