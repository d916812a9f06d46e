#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pyconv/graph.hpp"

namespace pyconv {

enum class Family { resnet_baseline, pyconvresnet, pyconvhgresnet, pyconvresnet_top };

std::string family_name(Family f);
/// Accepts "resnet-baseline", "pyconvresnet", "pyconvhgresnet", "pyconvresnet-top".
Family parse_family(const std::string& name);

/// Where the first block of each stage downsamples.
/// shortcut_maxpool: no stem pool; every stage strides in its first block and
/// the projection shortcut runs 3x3 max pool -> 1x1 conv -> BN.
/// stem_maxpool: classic layout with a stem max pool and strided 1x1 projections.
enum class DownsampleLayout { shortcut_maxpool, stem_maxpool };

using LevelSchedule = std::array<int, 4>;

enum class ShortcutKind { identity, projection, maxpool_projection };

struct BlockSpec {
  std::string name;
  std::int64_t in_channels = 0;
  std::int64_t width = 0;
  std::int64_t out_channels = 0;
  /// Spatial layer (carries the block stride). Must map width -> width.
  PyConvSpec spatial;
  /// Emit the spatial layer as a plain conv node (single level) instead of a
  /// pyconv node.
  bool plain_spatial = false;
  ShortcutKind shortcut = ShortcutKind::identity;
  /// Max-pool window for maxpool_projection, one entry per spatial axis.
  std::vector<int> pool_window;
};

/// Throws std::invalid_argument when the block is inconsistent, including an
/// identity shortcut on a block that changes stride or channel count.
void check_block(const BlockSpec& spec);

/// 1x1 -> BN -> ReLU -> spatial -> BN -> ReLU -> 1x1 -> BN, plus shortcut,
/// add and ReLU. Appends to `g` and returns the block's output node.
int build_bottleneck(NetworkGraph& g, const BlockSpec& spec, int input);

inline constexpr std::array<int, 4> kBlocks50{3, 4, 6, 3};
std::array<int, 4> blocks_for_depth(int depth);

struct BackboneOptions {
  Family family = Family::pyconvresnet;
  int depth = 50;
  LevelSchedule level_schedule{4, 3, 2, 1};
  /// Defaults to stem_maxpool for the baseline, shortcut_maxpool otherwise.
  std::optional<DownsampleLayout> layout;
  /// Divides every channel count (toy-scale networks).
  int width_divisor = 1;
  int stages = 4;
  /// Per-stage spatial stride; defaults follow the layout.
  std::optional<std::array<int, 4>> strides;
  std::array<int, 4> dilation{1, 1, 1, 1};
  bool video = false;
  std::array<int, 4> temporal_strides{1, 1, 2, 2};
  std::int64_t in_channels = 3;
};

struct Backbone {
  int output = -1;
  std::vector<int> stage_outputs;
  std::int64_t channels = 0;
};

Backbone add_backbone(NetworkGraph& g, const BackboneOptions& options);

/// Kernel sizes, output splits and groups of one stage's spatial layer.
PyConvSpec stage_pyconv(const BackboneOptions& options, int stage, std::int64_t width,
                        std::vector<int> stride);

/// One-line summary of a spatial layer, e.g. "PyConv2, 256: 5x5, 128, G=4 | 3x3, 128, G=1".
std::string describe_spatial(const PyConvSpec& spec, bool plain);

struct ClassificationOptions {
  BackboneOptions backbone;
  int num_classes = 1000;
};

NetworkGraph build_classification_net(const ClassificationOptions& options);
NetworkGraph build_classification_net(Family family, int depth,
                                      LevelSchedule schedule = {4, 3, 2, 1});

struct SegmentationOptions {
  BackboneOptions backbone = [] {
    BackboneOptions b;
    b.family = Family::resnet_baseline;
    return b;
  }();
  int num_classes = 150;
  int output_stride = 8;
  int global_bins = 9;
  bool aux = true;
};

/// Outputs "main" and, with aux enabled, "aux"; both at input resolution.
NetworkGraph build_pyconvsegnet(const SegmentationOptions& options);
NetworkGraph build_pyconvsegnet(int depth, int num_classes, int output_stride);

inline constexpr std::array<int, 6> kSsdBoxesPerMap{4, 6, 6, 6, 4, 4};

struct DetectionOptions {
  /// pyconvresnet builds PyConvSSD; resnet_baseline builds the plain SSD.
  Family family = Family::pyconvresnet;
  int depth = 50;
  int num_classes = 81;
  int width_divisor = 1;
};

/// Outputs "loc0".."loc5" and "conf0".."conf5", one pair per detection map.
NetworkGraph build_ssd(const DetectionOptions& options);
NetworkGraph build_pyconvssd(int depth, int num_classes);

struct VideoOptions {
  bool pyconv = true;
  int depth = 50;
  int num_classes = 400;
  int width_divisor = 1;
  double dropout = 0.5;
};

NetworkGraph build_video_net(const VideoOptions& options);
NetworkGraph build_pyconvresnet3d(int depth);
NetworkGraph build_resnet3d(int depth);

}  // namespace pyconv
