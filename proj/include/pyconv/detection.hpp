#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pyconv/tensor.hpp"

namespace pyconv {

/// Center form (cx, cy, w, h), fractions of the image size.
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;
};

/// Corner form (x0, y0, x1, y1), fractions of the image size.
struct Corners {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

using BoxDelta = std::array<double, 4>;

/// SSD300 geometry: six maps, scales linear in [min_scale, max_scale].
struct DefaultBoxConfig {
  int image_size = 300;
  std::vector<int> sides{38, 19, 10, 5, 3, 1};
  std::vector<int> boxes_per_map{4, 6, 6, 6, 4, 4};
  double min_scale = 0.2;
  double max_scale = 0.9;

  /// One scale per map plus the trailing scale used by the last map's
  /// extra square box.
  std::vector<double> scales() const;
  /// Ratios for a map: {1, 2, 1/2} for 4-box maps, plus {3, 1/3} for 6-box
  /// maps. The extra square box at scale sqrt(s_k s_k+1) is implied.
  std::vector<double> aspect_ratios(std::size_t map) const;
  /// Throws std::invalid_argument when a box count is not 4 or 6 or the
  /// per-map vectors differ in length.
  void validate() const;
  std::int64_t box_count() const;
};

/// Per map, per cell (row-major, y outer), per box; clipped to [0, 1].
std::vector<Box> generate_default_boxes(const DefaultBoxConfig& config);

struct Variances {
  double center = 0.1;
  double size = 0.2;
};

/// Inverse of encode_boxes, no clipping.
std::vector<Box> decode_center(const std::vector<BoxDelta>& deltas, const std::vector<Box>& defaults,
                               Variances v = {});
/// decode_center, converted to corners and clipped to [0, 1].
std::vector<Corners> decode_boxes(const std::vector<BoxDelta>& deltas, const std::vector<Box>& defaults,
                                  Variances v = {});
std::vector<BoxDelta> encode_boxes(const std::vector<Box>& boxes, const std::vector<Box>& defaults,
                                   Variances v = {});

Corners to_corners(const Box& b);
double iou(const Corners& a, const Corners& b);

/// Greedy suppression in descending score order (ties keep the lower index
/// first); drops any box whose IoU with a kept box exceeds the threshold.
/// top_k <= 0 keeps every survivor.
std::vector<std::size_t> nms(const std::vector<Corners>& boxes, const std::vector<double>& scores,
                             double iou_threshold, int top_k = 0);

/// Reorders SSD head maps ("loc{m}" [1, A*4, H, W]) into one delta per
/// default box in generate_default_boxes order.
std::vector<BoxDelta> gather_loc(const std::map<std::string, Tensor<float>>& outputs,
                                 const DefaultBoxConfig& config);
/// Same for "conf{m}" [1, A*C, H, W]; returns [boxes][classes].
std::vector<std::vector<double>> gather_conf(const std::map<std::string, Tensor<float>>& outputs,
                                             const DefaultBoxConfig& config, int num_classes);

struct Detection {
  int label = 0;
  double score = 0.0;
  Corners box;
};

struct DetectOptions {
  double score_threshold = 0.01;
  double iou_threshold = 0.45;
  /// Detections kept across all classes.
  int top_k = 200;
};

/// Softmax over each box's class scores, per-class NMS for every class but
/// background 0, then the top_k survivors by score (ties by class, then box).
std::vector<Detection> detect(const std::map<std::string, Tensor<float>>& outputs, const DefaultBoxConfig& config,
                              int num_classes, const DetectOptions& options = {});

}  // namespace pyconv
