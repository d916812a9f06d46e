#include "pyconv/golden.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pyconv {

namespace {

ModelConfig classifier(Family f, int depth, LevelSchedule s = {4, 3, 2, 1},
                       std::optional<DownsampleLayout> layout = std::nullopt) {
  ModelConfig c = default_config(Task::classification);
  c.family = f;
  c.depth = depth;
  c.level_schedule = s;
  c.downsample = layout;
  return c;
}

ModelConfig segmenter(int output_stride) {
  ModelConfig c = default_config(Task::segmentation);
  c.output_stride = output_stride;
  return c;
}

ModelConfig detector(Family f) {
  ModelConfig c = default_config(Task::detection);
  c.family = f;
  return c;
}

ModelConfig video(Family f) {
  ModelConfig c = default_config(Task::video);
  c.family = f;
  return c;
}

GoldenRow row(std::string label, ModelConfig c, std::optional<double> params, std::optional<double> gflops,
              double ptol = 0.0, double ftol = 0.03) {
  return GoldenRow{std::move(label), std::move(c), params, gflops, ptol, ftol};
}

std::vector<GoldenTable> build_tables() {
  const Family base = Family::resnet_baseline;
  const Family py = Family::pyconvresnet;
  const Family hg = Family::pyconvhgresnet;
  const auto plain = DownsampleLayout::stem_maxpool;
  std::vector<GoldenTable> t;

  t.push_back({"table1",
               "ImageNet backbones at 224x224",
               {
                   row("ResNet-50", classifier(base, 50), 25.56, 4.14),
                   row("PyConvResNet-50", classifier(py, 50), 24.85, 3.88),
                   row("PyConvHGResNet-50", classifier(hg, 50), 25.23, 4.61),
               }});

  t.push_back({"table2",
               "PyConv level schedules, ResNet-50 depth",
               {
                   row("(1,1,1,1) baseline", classifier(base, 50), 25.56, 4.14, 0.01),
                   row("(2,2,2,1)", classifier(py, 50, {2, 2, 2, 1}, plain), 24.91, 3.91, 0.01),
                   row("(3,3,2,1)", classifier(py, 50, {3, 3, 2, 1}, plain), 24.85, 3.85, 0.01),
                   row("(4,3,2,1)", classifier(py, 50, {4, 3, 2, 1}, plain), 24.85, 3.84, 0.01),
                   row("top(4,3,2,1)", classifier(Family::pyconvresnet_top, 50, {4, 3, 2, 1}, plain), 24.24,
                       3.63, 0.01),
                   row("(5,4,3,2)", classifier(py, 50, {5, 4, 3, 2}, plain), 23.45, 3.71, 0.02),
                   row("(4,3,2,1) max", classifier(py, 50), 24.85, 3.88, 0.01),
               }});

  t.push_back({"table3",
               "Deeper backbones at 224x224",
               {
                   row("ResNet-50", classifier(base, 50), 25.56, 4.14),
                   row("ResNet-101", classifier(base, 101), 44.55, 7.88),
                   row("ResNet-152", classifier(base, 152), 60.19, 11.62),
                   row("PyConvHGResNet-50", classifier(hg, 50), 25.23, 4.61),
                   row("PyConvHGResNet-101", classifier(hg, 101), 44.63, 8.42),
                   row("PyConvHGResNet-152", classifier(hg, 152), 60.66, 12.29),
                   row("PyConvResNet-50", classifier(py, 50), 24.85, 3.88),
                   row("PyConvResNet-101", classifier(py, 101), 42.31, 7.31),
                   row("PyConvResNet-152", classifier(py, 152), 56.64, 10.72),
               }});

  t.push_back({"table4",
               "PyConvSegNet head on ResNet-50, 473x473",
               {
                   row("OS 8", segmenter(8), 34.40, 116.84, 0.02),
                   row("OS 16", segmenter(16), 34.40, 36.08, 0.02),
               }});

  t.push_back({"table6",
               "SSD300 detectors",
               {
                   row("SSD-50", detector(base), 22.89, 20.92, 0.02, 0.05),
                   row("PyConvSSD-50", detector(py), 21.55, 19.71, 0.02, 0.05),
               }});

  t.push_back({"table7",
               "3D networks, 16x224x224 clips",
               {
                   row("ResNet3D-50", video(base), 47.00, 93.26, 0.01),
                   row("PyConvResNet3D-50", video(py), 44.91, 91.81, 0.01),
               }});
  return t;
}

const std::vector<GoldenTable>& tables() {
  static const std::vector<GoldenTable> t = build_tables();
  return t;
}

}  // namespace

std::vector<std::string> golden_table_ids() {
  std::vector<std::string> ids;
  for (const auto& t : tables()) ids.push_back(t.id);
  return ids;
}

const GoldenTable& golden_table(const std::string& id) {
  for (const auto& t : tables()) {
    if (t.id == id) return t;
  }
  std::string known;
  for (const auto& k : golden_table_ids()) known += (known.empty() ? "" : ", ") + k;
  throw std::invalid_argument("unknown expectation table '" + id + "' (known: " + known + ")");
}

const GoldenRow* find_golden_row(const GoldenTable& table, const ModelConfig& config) {
  for (const auto& r : table.rows) {
    if (r.config == config) return &r;
  }
  return nullptr;
}

std::vector<Expectation> expectations_for(const GoldenRow& row, const std::string& table_id) {
  std::vector<Expectation> out;
  const std::string source = table_id + " " + row.label;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Expectation p{Metric::params, row.params_m.value_or(nan),
                row.params_tolerance == 0.0 ? Comparison::rounded : Comparison::relative, row.params_tolerance, 2,
                source};
  Expectation f{Metric::flops, row.gflops.value_or(nan), Comparison::relative, row.flops_tolerance, 2, source};
  out.push_back(p);
  out.push_back(f);
  return out;
}

std::vector<CheckResult> compare_golden(const CostReport& report, const GoldenRow& row,
                                        const std::string& table_id) {
  return compare_to_expected(report, expectations_for(row, table_id));
}

}  // namespace pyconv
