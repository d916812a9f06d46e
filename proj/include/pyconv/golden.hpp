#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pyconv/analyzer.hpp"
#include "pyconv/config.hpp"

namespace pyconv {

/// One published cost figure pair with its comparison policy.
struct GoldenRow {
  std::string label;
  ModelConfig config;
  /// Millions / billions; absent entries are reported as unchecked.
  std::optional<double> params_m;
  std::optional<double> gflops;
  /// 0 selects rounded comparison at 2 decimals.
  double params_tolerance = 0.0;
  double flops_tolerance = 0.03;
};

struct GoldenTable {
  std::string id;
  std::string title;
  std::vector<GoldenRow> rows;
};

std::vector<std::string> golden_table_ids();
/// Throws std::invalid_argument for an unknown id.
const GoldenTable& golden_table(const std::string& id);
/// Row whose config equals `config`, or nullptr.
const GoldenRow* find_golden_row(const GoldenTable& table, const ModelConfig& config);

/// Params then FLOPs expectation; an absent figure carries a NaN value and
/// checks as unchecked.
std::vector<Expectation> expectations_for(const GoldenRow& row, const std::string& table_id);
std::vector<CheckResult> compare_golden(const CostReport& report, const GoldenRow& row,
                                        const std::string& table_id);

}  // namespace pyconv
