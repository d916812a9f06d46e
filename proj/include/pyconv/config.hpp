#pragma once

#include <optional>
#include <string>

#include "pyconv/arch.hpp"

namespace pyconv {

enum class Task { classification, segmentation, detection, video };

std::string task_name(Task t);

/// Declarative network description, the in-memory form of a JSON config:
///   {"family": "pyconvresnet", "depth": 50, "level_schedule": [4,3,2,1],
///    "task": "classification", "num_classes": 1000,
///    "input_shape": [1,3,224,224]}
/// Optional keys: output_stride (segmentation), width_divisor,
/// downsample ("shortcut-maxpool" | "stem-maxpool"), global_bins, aux.
struct ModelConfig {
  Family family = Family::pyconvresnet;
  int depth = 50;
  LevelSchedule level_schedule{4, 3, 2, 1};
  Task task = Task::classification;
  int num_classes = 1000;
  int output_stride = 8;
  Dims input_shape{1, 3, 224, 224};
  int width_divisor = 1;
  std::optional<DownsampleLayout> downsample;
  int global_bins = 9;
  bool aux = true;

  bool operator==(const ModelConfig&) const = default;
};

/// Error in a config document; the message names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Defaults for num_classes and input_shape depend on the task:
/// classification 1000 @ 224, segmentation 150 @ 473, detection 81 @ 300,
/// video 400 @ 16x224x224.
ModelConfig default_config(Task task);

/// Parses and validates a JSON document. Unknown keys, wrong types and
/// out-of-range values raise ConfigError.
ModelConfig parse_config(const std::string& json_text);
ModelConfig load_config(const std::string& path);
std::string config_to_json(const ModelConfig& config);

NetworkGraph build_network(const ModelConfig& config);

}  // namespace pyconv
