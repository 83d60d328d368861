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

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "detkit/eval.hpp"
#include "detkit/graph.hpp"
#include "detkit/harness.hpp"
#include "detkit/io.hpp"
#include "detkit/losses.hpp"
#include "detkit/nms.hpp"
#include "detkit/rfcalc.hpp"
#include "oracles/conv_fixtures.hpp"
#include "oracles/finite_diff.hpp"
#include "oracles/fixtures.hpp"
#include "oracles/naive_conv2d.hpp"
#include "oracles/nms_fixtures.hpp"
#include "oracles/pr_oracle.hpp"

namespace {

using namespace detkit;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates failed checks; the first few are kept for the report line.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_.push_back(what);
  }
  Outcome outcome(std::string summary) const {
    if (failures_ == 0) return {true, std::move(summary)};
    std::ostringstream ss;
    ss << failures_ << " failed check(s):";
    for (const auto& n : notes_) ss << " [" << n << "]";
    return {false, ss.str()};
  }

 private:
  int failures_ = 0;
  std::vector<std::string> notes_;
};

constexpr double kGradTol = 1e-4;
constexpr double kGradFloor = 1e-6;
constexpr int kGradPoints = 1000;

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

Outcome ac1_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Checker ck;
  Rng rng(101);
  double worst = 0.0;
  auto grad_check = [&](double analytic, double fd, const char* what) {
    const double e = oracle::rel_error(analytic, fd, kGradFloor);
    worst = std::max(worst, e);
    ck.expect(e <= kGradTol, std::string(what) + " rel " + num(e));
  };

  for (int n = 0; n < kGradPoints;) {
    const double x = rng.uniform(-3.0, 3.0);
    if (std::abs(std::abs(x) - 1.0) < 1e-3) continue;
    const double fd = oracle::central_difference([](double v) { return balance_l1(v).value; }, x);
    grad_check(balance_l1(x).grad, fd, "balance_l1");
    ++n;
  }

  for (int n = 0; n < kGradPoints;) {
    const double p = rng.uniform(0.02, 0.98), t = rng.uniform(0.02, 0.98);
    if (std::abs(p - t) < 1e-3) continue;
    const IouLossTerm l = r_iou_loss(p, t);
    grad_check(l.d_pred, oracle::central_difference([&](double v) { return r_iou_loss(v, t).value; }, p), "r_iou/p");
    grad_check(l.d_target, oracle::central_difference([&](double v) { return r_iou_loss(p, v).value; }, t),
               "r_iou/t");
    ++n;
  }

  for (int n = 0; n < kGradPoints;) {
    const auto [a, b] = oracle::random_overlapping_pair(rng);
    const IouValue iv = iou(a, b);
    if (iv.value < 0.5 + 1e-3) continue;
    const double p = rng.uniform(0.05, 0.99);
    const CejiTerm term = ceji_loss(p, iv, true);
    grad_check(term.d_p_cls, oracle::central_difference([&](double v) { return ceji_loss(v, iv, true).value; }, p),
               "ceji/p_cls");
    for (int i = 0; i < 4; ++i) {
      const double fd = oracle::central_difference(
          [&](double v) { return ceji_loss(p, iou(oracle::with_coord(a, i, v), b), true).value; }, a.coords()[i]);
      grad_check(term.d_box[static_cast<std::size_t>(i)], fd, "ceji/box");
    }
    ++n;
  }

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ck.expect(secs < 10.0, "runtime " + num(secs) + " s");
  return ck.outcome("3x" + std::to_string(kGradPoints) + " points, worst rel " + num(worst) + ", " + num(secs) +
                    " s");
}

Outcome ac2_loss_algebra() {
  Checker ck;
  const BalanceL1Params bp;
  const double b = std::exp(bp.gamma / bp.alpha) - 1.0;
  const double c = bp.gamma / b - bp.alpha;
  ck.expect(std::abs(bp.b() - b) <= 1e-12 * b, "b");
  ck.expect(std::abs(bp.c() - c) <= 1e-12, "C");
  ck.expect(std::abs(bp.c() - -0.42141) <= 1e-5, "C value " + num(bp.c()));
  const double below = balance_l1(std::nextafter(1.0, 0.0)).value;
  const double above = balance_l1(1.0).value;
  ck.expect(std::abs(below - above) <= 1e-9, "continuity at 1");
  ck.expect(std::abs(balance_l1(-1.0).value - balance_l1(std::nextafter(-1.0, 0.0)).value) <= 1e-9,
            "continuity at -1");
  ck.expect(std::abs(r_iou_loss(0.5, 1.0).value - std::numbers::ln2) <= 1e-12, "r_iou(0.5, 1)");
  Rng rng(102);
  for (int n = 0; n < 10000; ++n) {
    const double p = rng.uniform(0.01, 1.0), t = rng.uniform(0.01, 1.0);
    ck.expect(r_iou_loss(p, t).value == r_iou_loss(t, p).value, "swap symmetry");
  }
  return ck.outcome("b=" + num(bp.b()) + " C=" + num(bp.c()) + ", 10000 swap pairs");
}

Outcome ac3_nms_oracle() {
  Checker ck;
  Rng rng(103);
  int mismatches = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto dets = oracle::random_detections(rng, 10);
    for (double thr : {0.3, 0.5, 0.7}) {
      for (ScoreMode m : {ScoreMode::kStandard, ScoreMode::kIouGuided}) {
        NmsOptions opts;
        opts.iou_threshold = thr;
        opts.mode = m;
        if (oracle::sorted(greedy_nms_indices(dets, opts)) != oracle::sorted(nms_bruteforce_indices(dets, opts))) {
          ++mismatches;
        }
      }
    }
  }
  ck.expect(mismatches == 0, std::to_string(mismatches) + " mismatches");
  return ck.outcome("10000 instances x 3 thresholds x 2 modes, 0 mismatches");
}

Outcome ac4_guided_nms() {
  Checker ck;
  const std::vector<Detection> dets{{0, 1, {0, 0, 10, 10}, 0.95, 0.3}, {0, 1, {0, 0, 10, 7}, 0.85, 0.9}};
  ck.expect(std::abs(iou_value(dets[0].box, dets[1].box) - 0.7) <= 1e-12, "two-box IOU");
  NmsOptions opts;
  opts.mode = ScoreMode::kStandard;
  ck.expect(greedy_nms_indices(dets, opts) == std::vector<std::size_t>{0}, "standard keeps the first box");
  opts.mode = ScoreMode::kIouGuided;
  ck.expect(greedy_nms_indices(dets, opts) == std::vector<std::size_t>{1}, "guided keeps the second box");

  const ScenarioConfig cfg;
  const auto rows = run_calibrated_sweep(cfg, 100, cfg.nms.iou_threshold, 0);
  int lower = 0;
  for (const auto& r : rows) lower += r.guided_count < r.standard_count ? 1 : 0;
  ck.expect(lower >= 95, "guided strictly lower in " + std::to_string(lower) + "/100");
  return ck.outcome("survivor flips; guided strictly lower in " + std::to_string(lower) + "/100 scenarios");
}

Outcome ac5_receptive_fields() {
  Checker ck;
  for (const char* name : {"ssd", "dilated"}) {
    const std::string golden = read_file(fs::path(DETKIT_GOLDEN_DIR) / (std::string("rf_") + name + ".csv"));
    ck.expect(analysis_to_csv(analyze_chain({1, 1}, builtin_chain(name), 320)) == golden,
              std::string(name) + " golden table");
  }
  const double sa = ratio_spread(expansion_ratios(analyze_chain({1, 1}, builtin_chain("ssd"))));
  const double sb = ratio_spread(expansion_ratios(analyze_chain({1, 1}, builtin_chain("dilated"))));
  ck.expect(sb < sa, "spread b " + num(sb) + " not below a " + num(sa));

  const int ch = 256;
  auto conv = [&](int d) {
    LayerSpec l;
    l.name = "c";
    l.kernel = 3;
    l.dilation = d;
    l.in_channels = l.out_channels = ch;
    return l;
  };
  const auto stacked = analyze_chain({1, 1}, {conv(1), conv(1)});
  const auto dilated = analyze_chain({1, 1}, {conv(2)});
  ck.expect(stacked.final_state() == dilated.final_state(), "equal RF growth");
  ck.expect(stacked.total_params() == 18LL * ch * ch && dilated.total_params() == 9LL * ch * ch, "9C^2 vs 18C^2");
  return ck.outcome("golden tables match; spread " + num(sb) + " < " + num(sa) + "; 9C^2 vs 18C^2");
}

RfmWeights probe_weights(int c, bool d1, bool d3, bool d5) {
  RfmWeights w = RfmWeights::zeros(c, c, c);
  w.conv_in = ConvParams::identity(w.conv_in.spec);
  w.conv_out = ConvParams::identity(w.conv_out.spec);
  if (d1) w.branch_d1 = ConvParams::identity(w.branch_d1.spec);
  if (d3) w.branch_d3 = ConvParams::identity(w.branch_d3.spec);
  if (d5) w.branch_d5 = ConvParams::identity(w.branch_d5.spec);
  return w;
}

Outcome ac6_forward_graph() {
  Checker ck;
  Rng rng(106);
  for (const auto& s : {Shape4{1, 8, 1, 1}, Shape4{2, 8, 5, 9}, Shape4{1, 8, 20, 20}}) {
    ck.expect(rfm_forward(oracle::random_tensor(s, rng), RfmWeights::uniform(8, 8, 6, 3)).shape() ==
                  Shape4{s.n, 6, s.h, s.w},
              "rfm dims");
  }

  const int c = 8, q = 2;
  const Tensor x = oracle::random_tensor({1, c, 6, 7}, rng);
  std::vector<Tensor> g;
  for (int k = 0; k < 4; ++k) g.push_back(x.channel_slice(k * q, q));
  const Tensor zero({1, q, 6, 7});
  {
    const Tensor y = rfm_forward(x, probe_weights(c, false, false, false));
    ck.expect(y.channel_slice(0, q).max_abs_diff(g[0]) == 0.0, "identity group");
    for (int k = 1; k < 4; ++k) ck.expect(y.channel_slice(k * q, q).max_abs_diff(zero) == 0.0, "zero branches");
  }
  {
    const Tensor y = rfm_forward(x, probe_weights(c, true, true, true));
    ck.expect(y.channel_slice(q, q).max_abs_diff(g[1]) == 0.0, "Y2 = X2");
    ck.expect(y.channel_slice(2 * q, q).max_abs_diff(g[1] + g[2]) <= 1e-15, "Y3 = Y2 + X3");
    ck.expect(y.channel_slice(3 * q, q).max_abs_diff(g[1] + g[2] + g[3]) <= 1e-15, "Y4 = Y3 + X4");
  }

  const int sides[] = {12, 6, 4, 3, 2, 1};
  std::vector<Tensor> maps;
  for (int s : sides) maps.push_back(oracle::random_tensor({1, 3, s, s}, rng));
  const int channels[] = {3, 3, 3, 3, 3, 3};
  const auto out =
      two_way_fpn_forward(maps, oracle::random_tensor({1, 2, 24, 24}, rng), FpnWeights::uniform(channels, 2, 9));
  ck.expect(out.size() == kPyramidLevels, "six maps");
  for (std::size_t k = 0; k < out.size(); ++k) {
    ck.expect(out[k].shape() == Shape4{1, 512, sides[k], sides[k]}, "fpn level " + std::to_string(k + 1));
  }

  double worst = 0.0;
  std::size_t fixtures = 0;
  for (const auto& f : oracle::conv_fixtures()) {
    const Tensor in = oracle::random_tensor(f.input, rng);
    const ConvParams p = ConvParams::uniform(f.spec, rng, 0.5);
    const Tensor got = conv2d(in, p), want = oracle::naive_conv2d(in, p);
    const bool same = got.shape() == want.shape();
    ck.expect(same, f.name + " shape");
    if (same) worst = std::max(worst, got.max_abs_diff(want));
    ++fixtures;
  }
  ck.expect(worst <= 1e-10, "conv2d diff " + num(worst));
  return ck.outcome("rfm probes ok; 6x512 fpn maps; conv2d max diff " + num(worst) + " over " +
                    std::to_string(fixtures) + " fixtures");
}

Outcome ac7_evaluator() {
  Checker ck;
  std::vector<GroundTruth> gts;
  std::vector<std::int64_t> ids;
  for (int i = 0; i < 3; ++i) {
    ids.push_back(i);
    gts.push_back({i, 1, {0, 0, 20, 20}});
    gts.push_back({i, 1, {100, 100, 160, 160}});
    gts.push_back({i, 2, {200, 0, 320, 150}});
  }
  std::vector<ScoredDetection> perfect;
  for (const auto& g : gts) perfect.push_back({static_cast<std::int64_t>(perfect.size()), g.image_id, g.class_id, g.box, 1.0});
  const ApReport r = evaluate(perfect, gts, ids);
  for (const auto& v : {r.ap, r.ap50, r.ap75, r.ap_small, r.ap_medium, r.ap_large}) {
    ck.expect(v.has_value() && *v == 1.0, "perfect field");
  }

  const std::vector<GroundTruth> cg{{0, 1, {0, 0, 10, 10}}, {0, 1, {20, 0, 30, 10}}, {0, 1, {40, 0, 50, 10}}};
  const std::vector<ScoredDetection> cd{{0, 0, 1, {0, 0, 10, 10}, 0.9},
                                        {1, 0, 1, {0, 0, 10, 8}, 0.8},
                                        {2, 0, 1, {21, 0, 31, 10}, 0.7},
                                        {3, 0, 1, {60, 0, 70, 10}, 0.6}};
  const std::vector<std::int64_t> one{0};
  const ApReport cr = evaluate(cd, cg, one);
  for (std::size_t t = 0; t < cr.iou_thresholds.size(); ++t) {
    ck.expect(std::abs(*cr.ap_per_threshold[t] - oracle::brute_force_ap(cd, cg, cr.iou_thresholds[t])) <= 1e-12,
              "crafted at " + num(cr.iou_thresholds[t]));
  }

  Rng rng(107);
  std::vector<ScoredDetection> dets;
  for (const auto& g : gts) {
    for (int k = 0; k < 3; ++k) {
      dets.push_back({static_cast<std::int64_t>(dets.size()), g.image_id, g.class_id,
                      g.box.translated(rng.uniform(-6, 6), rng.uniform(-6, 6)), rng.uniform()});
    }
  }
  const std::string base = ap_report_to_json(evaluate(dets, gts, ids));
  for (int s = 0; s < 50; ++s) {
    rng.shuffle(dets.begin(), dets.end());
    rng.shuffle(ids.begin(), ids.end());
    ck.expect(ap_report_to_json(evaluate(dets, gts, ids)) == base, "permutation " + std::to_string(s));
  }
  return ck.outcome("perfect = 1.0; crafted AP50 " + num(*cr.ap50) + " matches oracle; 50 shuffles invariant");
}

Outcome ac8_toy_training() {
  Checker ck;
  int reduced = 0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    ScenarioConfig cfg;
    cfg.seed = 1000 + static_cast<std::uint64_t>(s);
    const Scenario sc = generate_scenario(cfg);
    const FitResult fit = fit_toy(ToyModel::selector(sc.heads.num_classes), sc, cfg);
    const bool ok = fit.trace.back().total < fit.trace.front().total;
    reduced += ok ? 1 : 0;
    ck.expect(ok, "seed " + std::to_string(cfg.seed));
  }
  const Scenario sc = generate_scenario(ScenarioConfig{});
  const auto rows = run_ablation(sc, 0);
  std::map<std::string, int> combos;
  for (const auto& r : rows) ++combos[to_string(r.cls) + "/" + to_string(r.iou)];
  ck.expect(combos.size() == 4, std::to_string(combos.size()) + " loss combinations");
  const std::string csv = ablation_csv(rows);
  ck.expect(std::count(csv.begin(), csv.end(), '\n') == static_cast<std::ptrdiff_t>(rows.size()) + 1, "csv rows");
  return ck.outcome(std::to_string(reduced) + "/" + std::to_string(seeds) + " seeds reduce loss; ablation " +
                    std::to_string(rows.size()) + " rows over 4 combos");
}

#ifdef DETKIT_CLI_PATH
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

Outcome ac9_determinism() {
  Checker ck;
  const fs::path work = fs::temp_directory_path() / ("detkit_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);

  ScenarioConfig cfg;
  cfg.num_images = 2;
  cfg.fit.epochs = 5;
  cfg.report.sweep_seeds = 3;
  cfg.report.nms_thresholds = {0.5};
  const fs::path config = work / "config.json";
  write_file_atomic(config, config_to_json(cfg));

  const std::string cli = DETKIT_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    ck.expect(rc == 0, "exit status of: " + args);
  };
  const fs::path inputs = work / "inputs";
  run("gen --config " + config.string() + " --seed 11 --out " + inputs.string());
  const std::string dets = (inputs / "detections.csv").string(), gt = (inputs / "gt.json").string();

  std::size_t compared = 0;
  for (const char* rep : {"a", "b"}) {
    const fs::path d = work / rep;
    fs::create_directories(d / "eval");
    fs::create_directories(d / "rf");
    const std::string common = " --config " + config.string() + " --seed 11";
    run("gen" + common + " --anchors --out " + (d / "gen").string());
    run("fit" + common + " --out " + (d / "fit").string());
    run("nms" + common + " --detections " + dets + " --mode guided --out " + (d / "nms").string());
    run("eval --detections " + dets + " --gt " + gt + " --out " + (d / "eval" / "ap.json").string());
    run("rf --builtin dilated --out " + (d / "rf" / "rf.csv").string());
    run("report" + common + " --out " + (d / "report").string());
  }
  const auto a = snapshot(work / "a"), b = snapshot(work / "b");
  ck.expect(a.size() == b.size() && !a.empty(), "file sets differ");
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    ck.expect(it != b.end() && it->second == bytes, name);
    ++compared;
  }
  for (const char* sub : {"gen", "fit", "nms", "eval", "rf", "report"}) {
    bool any = false;
    for (const auto& [name, bytes] : a) any = any || name.rfind(std::string(sub) + "/", 0) == 0;
    ck.expect(any, std::string(sub) + " produced no output");
  }
  fs::remove_all(work);
  return ck.outcome(std::to_string(compared) + " files byte-identical across repeated runs of 6 subcommands");
}
#else
Outcome ac9_determinism() { return {false, "built without the CLI target"}; }
#endif

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"AC1", ac1_gradients},        {"AC2", ac2_loss_algebra},  {"AC3", ac3_nms_oracle},
      {"AC4", ac4_guided_nms},       {"AC5", ac5_receptive_fields}, {"AC6", ac6_forward_graph},
      {"AC7", ac7_evaluator},        {"AC8", ac8_toy_training},  {"AC9", ac9_determinism},
  };
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
