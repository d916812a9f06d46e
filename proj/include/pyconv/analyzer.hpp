#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pyconv/graph.hpp"

namespace pyconv {

inline constexpr const char* kFlopConvention =
    "1 multiply-accumulate = 1 FLOP for conv and linear layers (bias adds not counted); "
    "batch norm, ReLU, max/avg pooling, residual add and bilinear upsample cost 1 FLOP "
    "per output element; concat, dropout and input cost 0. Parameters count learnable "
    "weights, biases and BN scale/shift; BN running statistics are excluded.";

struct NodeCost {
  int node = 0;
  std::string name;
  std::string kind;
  std::int64_t params = 0;
  std::int64_t flops = 0;
  Dims output;
};

struct StageCost {
  std::string name;
  Dims output;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct CostReport {
  std::string network;
  /// Empty for a params-only report.
  Dims input;
  bool has_flops = false;
  std::vector<NodeCost> nodes;
  std::vector<StageCost> stages;
  std::int64_t total_params = 0;
  std::int64_t total_flops = 0;
  std::string convention = kFlopConvention;

  double params_millions() const { return static_cast<double>(total_params) / 1e6; }
  double gflops() const { return static_cast<double>(total_flops) / 1e9; }
};

/// Parameter census only; needs no input shape.
CostReport count_params(const NetworkGraph& net);

/// Parameters and FLOPs for a concrete input (FLOPs scale with the batch).
CostReport count_flops(const NetworkGraph& net, const Dims& input);

/// FLOPs of a single node given its input and output dims.
std::int64_t node_flops(const LayerNode& node, const std::vector<Dims>& shapes);

enum class Metric { params, flops };
enum class Comparison {
  /// Pass iff the actual value, in M (params) or G (FLOPs) rounded to
  /// `decimals`, equals the expected value.
  rounded,
  /// Pass iff |actual - expected| <= tolerance * expected.
  relative,
};

struct Expectation {
  Metric metric = Metric::params;
  /// Millions for params, billions for FLOPs.
  double value = 0.0;
  Comparison mode = Comparison::relative;
  double tolerance = 0.0;
  int decimals = 2;
  std::string source;
};

enum class CheckStatus { pass, fail, unchecked };

std::string status_name(CheckStatus s);

struct CheckResult {
  Expectation expected;
  /// Absent when the report lacks the metric.
  std::optional<double> actual;
  double relative_delta = 0.0;
  CheckStatus status = CheckStatus::unchecked;
};

CheckResult check(const CostReport& report, const Expectation& e);
std::vector<CheckResult> compare_to_expected(const CostReport& report,
                                             const std::vector<Expectation>& expected);

std::string report_json(const CostReport& report, const std::vector<CheckResult>& checks = {});
/// Per-stage table followed by totals and check lines.
std::string report_text(const CostReport& report, const std::vector<CheckResult>& checks = {});

}  // namespace pyconv
