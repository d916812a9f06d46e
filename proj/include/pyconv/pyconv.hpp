#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pyconv/nnops.hpp"

namespace pyconv {

/// One pyramid level: a grouped convolution over the full input.
/// `kernel` holds (Kh, Kw) or (Kt, Kh, Kw); padding is (K - 1) / 2 * dilation.
struct PyConvLevel {
  std::vector<int> kernel;
  std::int64_t out_channels = 0;
  std::int64_t groups = 1;
  int dilation = 1;

  /// Spatial kernel size used for ordering and for the group schedule (Kh).
  int spatial_kernel() const;
  bool operator==(const PyConvLevel&) const = default;
};

/// Levels are ordered by ascending kernel size and share one stride; their
/// outputs are concatenated in that order.
struct PyConvSpec {
  std::int64_t in_channels = 0;
  std::vector<PyConvLevel> levels;
  std::vector<int> stride;

  int spatial_rank() const { return static_cast<int>(stride.size()); }
  std::int64_t out_channels() const;
  /// Standalone convolution executed by level `n`.
  ConvSpec level_conv(std::size_t n) const;
  Dims output_dims(const Dims& input_dims) const;
  /// First output channel of every level, plus the total at the end.
  std::vector<std::int64_t> channel_offsets() const;

  bool operator==(const PyConvSpec&) const = default;
};

/// Every rule the spec breaks; empty means valid.
std::vector<std::string> validate(const PyConvSpec& spec);

/// Throws ShapeError listing all violations.
void require_valid(const PyConvSpec& spec);

/// G_n is the smallest power-of-two divisor of FM_i not below K_n^2 / K_1^2,
/// capped at the largest power-of-two divisor of FM_i.
std::vector<std::int64_t> default_group_schedule(std::int64_t in_channels,
                                                 const std::vector<int>& kernel_sizes);

/// Square 2D pyramid with default groups and an even output split, or
/// explicit `splits` / `groups` when given.
PyConvSpec make_pyconv2d(std::int64_t in_channels, std::int64_t out_channels,
                         const std::vector<int>& kernel_sizes, int stride = 1,
                         std::optional<std::vector<std::int64_t>> splits = std::nullopt,
                         std::optional<std::vector<std::int64_t>> groups = std::nullopt,
                         int dilation = 1);

template <typename T>
Tensor<T> pyconv_forward(const Tensor<T>& input, const PyConvSpec& spec,
                         std::span<const Tensor<T>> level_weights);

template <typename T>
struct PyConvGrads {
  Tensor<T> input;
  std::vector<Tensor<T>> weights;
};

template <typename T>
PyConvGrads<T> pyconv_backward(const Tensor<T>& input, const PyConvSpec& spec,
                               std::span<const Tensor<T>> level_weights,
                               const Tensor<T>& grad_output);

struct Cost {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  bool operator==(const Cost&) const = default;
};

/// params = sum_n K_n^2 (FM_i / G_n) FM_on; flops = params * output volume.
Cost pyconv_cost(const PyConvSpec& spec, const Dims& out_spatial);

}  // namespace pyconv
