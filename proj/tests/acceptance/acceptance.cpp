// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are fixed
// below and are not configurable.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <algorithm>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pyconv/analyzer.hpp"
#include "pyconv/config.hpp"
#include "pyconv/detection.hpp"
#include "pyconv/gradcheck.hpp"
#include "pyconv/nnops.hpp"
#include "pyconv/pyconv.hpp"
#include "pyconv/rng.hpp"
#include "pyconv/train.hpp"

using namespace pyconv;

namespace {

constexpr double kFlopsTol = 0.03;
constexpr double kAblationParamsTol = 0.01;
constexpr double kAblationWideParamsTol = 0.02;
constexpr double kSegParamsTol = 0.02;
constexpr double kSsdParamsTol = 0.02;
constexpr double kSsdFlopsTol = 0.05;
constexpr double kVideoParamsTol = 0.01;
constexpr double kGradThreshold = 1e-5;
constexpr double kGradBudgetSeconds = 300.0;
constexpr double kToyTargetAccuracy = 0.9;
constexpr int kToyEpochs = 30;
constexpr std::uint64_t kToySeed = 0;
constexpr int kOracleSpecs = 100;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [miss] " << what << ";";
    }
  }
};

const Family kBase = Family::resnet_baseline;
const Family kPy = Family::pyconvresnet;
const Family kHg = Family::pyconvhgresnet;

ModelConfig classifier(Family f, int depth, LevelSchedule s = {4, 3, 2, 1},
                       std::optional<DownsampleLayout> layout = std::nullopt) {
  ModelConfig c = default_config(Task::classification);
  c.family = f;
  c.depth = depth;
  c.level_schedule = s;
  c.downsample = layout;
  return c;
}

CostReport cost(const ModelConfig& c) { return count_flops(build_network(c), c.input_shape); }

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

bool within(double actual, double expected, double tol) { return std::abs(actual - expected) <= tol * expected; }

void check_rel(Outcome& o, const std::string& label, double actual, double expected, double tol, const char* unit) {
  const double delta = (actual - expected) / expected;
  const bool ok = within(actual, expected, tol);
  o.detail << " " << label << " " << fmt(actual, 3) << unit << " vs " << fmt(expected, 2) << " ("
           << fmt(100 * delta, 2) << "%)";
  o.expect(ok, label + " outside " + fmt(100 * tol, 0) + "%");
}

void params_exact(Outcome& o) {
  const std::vector<std::tuple<std::string, ModelConfig, double>> rows{
      {"ResNet-50", classifier(kBase, 50), 25.56},         {"ResNet-101", classifier(kBase, 101), 44.55},
      {"ResNet-152", classifier(kBase, 152), 60.19},       {"PyConvResNet-50", classifier(kPy, 50), 24.85},
      {"PyConvResNet-101", classifier(kPy, 101), 42.31},   {"PyConvResNet-152", classifier(kPy, 152), 56.64},
      {"PyConvHGResNet-50", classifier(kHg, 50), 25.23},
  };
  for (const auto& [label, c, expected] : rows) {
    const double m = static_cast<double>(build_network(c).param_count()) / 1e6;
    const double rounded = std::round(m * 100.0) / 100.0;
    o.detail << " " << label << " " << fmt(rounded, 2) << "M";
    o.expect(std::abs(rounded - expected) < 1e-9, label + " expected " + fmt(expected, 2));
  }
}

void flops_224(Outcome& o) {
  const std::vector<std::tuple<std::string, ModelConfig, double>> rows{
      {"PyConvResNet-50", classifier(kPy, 50), 3.88},   {"PyConvResNet-101", classifier(kPy, 101), 7.31},
      {"PyConvResNet-152", classifier(kPy, 152), 10.72}, {"ResNet-50", classifier(kBase, 50), 4.14},
      {"PyConvHGResNet-50", classifier(kHg, 50), 4.61},
  };
  for (const auto& [label, c, expected] : rows) check_rel(o, label, cost(c).gflops(), expected, kFlopsTol, "G");
}

void ablation(Outcome& o) {
  const auto plain = DownsampleLayout::stem_maxpool;
  struct Row {
    std::string label;
    ModelConfig config;
    double params;
    double gflops;
    double params_tol;
  };
  const std::vector<Row> rows{
      {"(2,2,2,1)", classifier(kPy, 50, {2, 2, 2, 1}, plain), 24.91, 3.91, kAblationParamsTol},
      {"(3,3,2,1)", classifier(kPy, 50, {3, 3, 2, 1}, plain), 24.85, 3.85, kAblationParamsTol},
      {"top(4,3,2,1)", classifier(Family::pyconvresnet_top, 50, {4, 3, 2, 1}, plain), 24.24, 3.63,
       kAblationParamsTol},
      {"(5,4,3,2)", classifier(kPy, 50, {5, 4, 3, 2}, plain), 23.45, 3.71, kAblationWideParamsTol},
  };
  for (const Row& r : rows) {
    const CostReport c = cost(r.config);
    check_rel(o, r.label, c.params_millions(), r.params, r.params_tol, "M");
    check_rel(o, r.label, c.gflops(), r.gflops, kFlopsTol, "G");
  }
  const double with_max = cost(classifier(kPy, 50)).gflops();
  const double without = cost(classifier(kPy, 50, {4, 3, 2, 1}, plain)).gflops();
  o.detail << " max-pool shortcut delta +" << fmt(with_max - without, 3) << "G";
  o.expect(with_max > without, "shortcut max pooling must add FLOPs");
  check_rel(o, "(4,3,2,1) max", with_max, 3.88, kFlopsTol, "G");
  check_rel(o, "(4,3,2,1) plain", without, 3.84, kFlopsTol, "G");
}

void segmentation(Outcome& o) {
  ModelConfig c = default_config(Task::segmentation);
  c.output_stride = 8;
  const CostReport os8 = cost(c);
  c.output_stride = 16;
  const CostReport os16 = cost(c);
  check_rel(o, "params", os8.params_millions(), 34.40, kSegParamsTol, "M");
  check_rel(o, "OS8", os8.gflops(), 116.84, kFlopsTol, "G");
  check_rel(o, "OS16", os16.gflops(), 36.08, kFlopsTol, "G");
}

void detection(Outcome& o) {
  const DefaultBoxConfig boxes;
  const auto generated = generate_default_boxes(boxes);
  o.detail << " anchors " << generated.size();
  o.expect(generated.size() == 8732 && boxes.box_count() == 8732, "anchor census 8732");

  ModelConfig c = default_config(Task::detection);
  c.family = kPy;
  const auto net = build_network(c);
  const auto shapes = net.infer_shapes(c.input_shape);
  std::vector<std::int64_t> sides;
  for (int m = 0; m < 6; ++m) {
    for (const auto& [name, id] : net.outputs()) {
      if (name == "loc" + std::to_string(m)) sides.push_back(shapes.at(static_cast<std::size_t>(id))[2]);
    }
  }
  o.detail << " sides";
  for (auto s : sides) o.detail << " " << s;
  o.expect(sides == std::vector<std::int64_t>{38, 19, 10, 5, 3, 1}, "map sides 38,19,10,5,3,1");
  const CostReport r = count_flops(net, c.input_shape);
  check_rel(o, "PyConvSSD-50", r.params_millions(), 21.55, kSsdParamsTol, "M");
  check_rel(o, "PyConvSSD-50", r.gflops(), 19.71, kSsdFlopsTol, "G");
}

void video(Outcome& o) {
  ModelConfig c = default_config(Task::video);
  c.family = kPy;
  const CostReport py = cost(c);
  c.family = kBase;
  const CostReport base = cost(c);
  check_rel(o, "PyConvResNet3D-50", py.params_millions(), 44.91, kVideoParamsTol, "M");
  check_rel(o, "PyConvResNet3D-50", py.gflops(), 91.81, kFlopsTol, "G");
  check_rel(o, "ResNet3D-50", base.params_millions(), 47.00, kVideoParamsTol, "M");
  check_rel(o, "ResNet3D-50", base.gflops(), 93.26, kFlopsTol, "G");
}

void gradients(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckOptions opt;
  opt.threshold = kGradThreshold;
  std::vector<GradCheckReport> reports = check_ops(opt);
  opt.samples_per_tensor = 1;
  for (const ToyNetwork& t : toy_gradcheck_suite()) reports.push_back(check_network(build_network(t.config), t.input, opt));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0;
  std::string worst_subject;
  int failed = 0;
  for (const auto& r : reports) {
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_subject = r.subject;
    }
    if (!r.passed || r.max_rel_error > kGradThreshold) {
      ++failed;
      o.expect(false, r.subject + " rel error " + std::to_string(r.max_rel_error));
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, " %zu subjects, %d failed, worst %.3e (%s), %.0f s", reports.size(), failed, worst,
                worst_subject.c_str(), seconds);
  o.detail << buf;
  o.expect(seconds < kGradBudgetSeconds, "runtime over " + fmt(kGradBudgetSeconds, 0) + " s");
}

void oracles(Outcome& o) {
  int specs = 0;
  int grouped_ok = 0;
  int level_ok = 0;
  int fast_ok = 0;
  for (std::uint64_t t = 0; specs < kOracleSpecs; ++t) {
    const std::uint64_t s = rng::mix(4242, t);
    auto pick = [&](std::uint64_t k, int n) { return static_cast<int>(rng::uniform(s, k) * n); };
    const std::int64_t g = std::int64_t{1} << pick(1, 4);
    const std::int64_t cig = 1 + pick(2, 3), cog = 1 + pick(3, 3);
    const int k = 1 + 2 * pick(4, 4), stride = 1 + pick(5, 2), dil = 1 + pick(6, 2);
    const int pad = (k - 1) / 2 * dil;
    const std::int64_t h = 3 + pick(9, 8), w = 3 + pick(10, 8);
    if (std::min(h, w) + 2 * pad < dil * (k - 1) + 1) continue;
    ++specs;
    const auto spec = ConvSpec::conv2d(g * cig, g * cog, k, stride, pad, g, dil);
    const auto x = random_normal<double>({1 + pick(11, 2), g * cig, h, w}, rng::mix(s, 20));
    const auto wt = random_normal<double>(spec.weight_dims(), rng::mix(s, 21));
    const auto y = conv_forward<double>(x, wt, nullptr, spec);

    std::vector<Tensor<double>> parts;
    const std::int64_t per_group = cog * cig * k * k;
    for (std::int64_t j = 0; j < g; ++j) {
      const Tensor<double> ws({cog, cig, k, k},
                              std::vector<double>(wt.raw() + j * per_group, wt.raw() + (j + 1) * per_group));
      parts.push_back(
          conv_forward<double>(slice_channels(x, j * cig, cig), ws, nullptr, ConvSpec::conv2d(cig, cog, k, stride, pad, 1, dil)));
    }
    grouped_ok += concat_channels<double>(parts) == y;

    const auto one = make_pyconv2d(g * cig, g * cog, {k}, stride, std::nullopt, std::vector<std::int64_t>{g}, dil);
    const std::vector<Tensor<double>> level_weights{wt};
    level_ok += pyconv_forward<double>(x, one, level_weights) == y;
    fast_ok += reference::conv_forward_direct<double>(x, wt, nullptr, spec) == y;
  }
  o.detail << " " << specs << " specs: grouped==concat " << grouped_ok << ", 1-level==conv " << level_ok
           << ", fast==direct " << fast_ok;
  o.expect(grouped_ok == specs, "grouped decomposition not exact");
  o.expect(level_ok == specs, "1-level PyConv not exact");
  o.expect(fast_ok == specs, "fast path not exact");
}

void group_identity(Outcome& o) {
  // Constructed grid: explicit groups G_n = K_n^2 / K_1^2, FM_i divisible by
  // every G_n, equal splits divisible by their groups.
  struct Grid {
    std::vector<int> k;
    std::vector<std::int64_t> g;
    std::int64_t unit;
  };
  const std::vector<Grid> grids{{{1, 3}, {1, 9}, 9},         {{3, 9}, {1, 9}, 9},        {{1, 5}, {1, 25}, 25},
                                {{1, 3, 5}, {1, 9, 25}, 225}, {{1, 3, 9}, {1, 9, 81}, 81}, {{3, 9, 15}, {1, 9, 25}, 225},
                                {{1, 3, 5, 7}, {1, 9, 25, 49}, 11025}};
  int exact = 0;
  int cases = 0;
  for (const Grid& grid : grids) {
    for (std::int64_t a = 1; a <= 3; ++a) {
      for (std::int64_t m = 1; m <= 3; ++m) {
        const std::int64_t fm_i = grid.unit * a, split = grid.unit * m;
        const auto n = static_cast<std::int64_t>(grid.k.size());
        const auto s = make_pyconv2d(fm_i, split * n, grid.k, 1, std::vector<std::int64_t>(grid.k.size(), split), grid.g);
        const std::int64_t k1 = grid.k.front();
        ++cases;
        exact += validate(s).empty() && pyconv_cost(s, {1, 1}).params == k1 * k1 * fm_i * split * n;
      }
    }
  }
  o.detail << " constructed " << exact << "/" << cases << " exact;";
  o.expect(exact == cases, "constructed grid identity");

  int bounded = 0;
  const int random_specs = 500;
  for (int t = 0; t < random_specs; ++t) {
    const std::uint64_t seed = rng::mix(99, static_cast<std::uint64_t>(t));
    std::vector<int> ks;
    for (int k : {3, 5, 7, 9}) {
      if (k == 3 || rng::uniform(seed, static_cast<std::uint64_t>(k)) < 0.5) ks.push_back(k);
    }
    const auto fm_i = static_cast<std::int64_t>(64 * (1 + static_cast<int>(rng::uniform(seed, 20) * 8)));
    const auto split = static_cast<std::int64_t>(16 * (1 + static_cast<int>(rng::uniform(seed, 21) * 8)));
    const auto n = static_cast<std::int64_t>(ks.size());
    const auto s = make_pyconv2d(fm_i, split * n, ks, 1);
    bounded += validate(s).empty() && pyconv_cost(s, {1, 1}).params <= 9 * fm_i * split * n;
  }
  o.detail << " power-of-two rounding " << bounded << "/" << random_specs << " within bound";
  o.expect(bounded == random_specs, "rounded schedule exceeded the bound");
}

void toy_training(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto net = build_network(toy_model_config());
  const auto data = make_toy_dataset(kToySeed);
  TrainConfig cfg;
  cfg.epochs = kToyEpochs;
  cfg.seed = kToySeed;
  TrainState state = init_train_state(net, kToySeed);
  const auto history = train_toy(net, data, cfg, state);

  int first = -1;
  bool lr_ok = history.size() == static_cast<std::size_t>(kToyEpochs);
  for (const EpochRecord& r : history) {
    if (first < 0 && r.accuracy >= kToyTargetAccuracy) first = r.epoch;
    lr_ok = lr_ok && r.lr == lr_at(r.epoch, cfg);
  }

  TrainConfig short_cfg = cfg;
  short_cfg.epochs = 2;
  TrainState again = init_train_state(net, kToySeed);
  const auto replay = train_toy(net, data, short_cfg, again);
  bool same = replay.size() == 2;
  for (std::size_t i = 0; same && i < replay.size(); ++i) {
    same = replay[i].loss == history[i].loss && replay[i].accuracy == history[i].accuracy;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  o.detail << " seed " << kToySeed << ": first epoch >= " << fmt(kToyTargetAccuracy, 2) << " is " << first
           << ", final " << fmt(history.empty() ? 0.0 : history.back().accuracy, 4) << ", lr schedule "
           << (lr_ok ? "exact" : "mismatch") << ", replay " << (same ? "identical" : "differs") << ", "
           << fmt(seconds, 0) << " s";
  o.expect(first >= 0, "accuracy target not reached");
  o.expect(lr_ok, "learning-rate history");
  o.expect(same, "replay not deterministic");
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "criterion ids to run (default all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "parameter counts (exact at 2 decimals)", params_exact},
      {2, "FLOPs at 224x224 (3%)", flops_224},
      {3, "level-schedule ablation", ablation},
      {4, "segmentation head cost", segmentation},
      {5, "detection anchors and cost", detection},
      {6, "3D network cost", video},
      {7, "gradient suite", gradients},
      {8, "oracle equivalence", oracles},
      {9, "pyramid cost identity", group_identity},
      {10, "toy training", toy_training},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome o;
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::printf("%s  criterion %d  %s:%s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
