#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "pyconv/config.hpp"
#include "pyconv/graph.hpp"

namespace pyconv {

enum ExitCode : int { kExitOk = 0, kExitInvalid = 1, kExitMismatch = 2 };

struct CliOptions {
  std::string config_path;
  std::optional<Dims> input_shape;
  std::string expect;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
  bool json = false;

  // gradcheck
  bool toy_scale = false;
  bool ops = false;
  bool corrupt = false;
  int samples = 1;

  // train-toy
  int epochs = 30;
  int per_class = 32;
  int batch_size = 16;
  double lr = 0.1;
  std::string resume;
  std::string history;
  double expect_accuracy = 0.0;

  // infer
  std::string weights;
  std::string input;
  std::optional<int> toy_sample;
};

/// "N,C,H,W" (or N,C,T,H,W) into extents; throws ConfigError.
Dims parse_shape(const std::string& text);

/// Config from --config, or the classification default when absent; a
/// given --input-shape replaces the config's input shape.
ModelConfig resolve_config(const CliOptions& options);

/// Per-stage output extent and layer rows.
std::string describe_text(const NetworkGraph& net, const Dims& input);

int cmd_describe(const CliOptions& options, std::ostream& out);
/// With --expect and no --config every row of the table is checked.
int cmd_analyze(const CliOptions& options, std::ostream& out);
int cmd_gradcheck(const CliOptions& options, std::ostream& out);
int cmd_train_toy(const CliOptions& options, std::ostream& out);
int cmd_infer(const CliOptions& options, std::ostream& out);
int cmd_export_weights(const CliOptions& options, std::ostream& out);

}  // namespace pyconv
