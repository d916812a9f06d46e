#pragma once

#include <cstdint>
#include <vector>

#include "pyconv/tensor.hpp"

namespace pyconv {

/// Geometry of a grouped convolution over 2 or 3 spatial axes. Axis vectors
/// are ordered (H, W) or (T, H, W); all four must have the same length.
struct ConvSpec {
  std::vector<int> kernel;
  std::vector<int> stride;
  std::vector<int> padding;
  std::vector<int> dilation;
  std::int64_t groups = 1;
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;

  static ConvSpec conv2d(std::int64_t in, std::int64_t out, int k, int stride = 1, int pad = 0,
                         std::int64_t groups = 1, int dilation = 1);
  static ConvSpec conv3d(std::int64_t in, std::int64_t out, std::vector<int> kernel,
                         std::vector<int> stride, std::vector<int> pad, std::int64_t groups = 1);

  int spatial_rank() const { return static_cast<int>(kernel.size()); }
  /// [FM_o, FM_i / G, k...]
  Dims weight_dims() const;
  std::int64_t weight_count() const;
  /// floor((in + 2 pad - dilation (k - 1) - 1) / stride) + 1 per axis.
  Dims output_spatial(const Dims& in_spatial) const;
  Dims output_dims(const Dims& input_dims) const;
  /// Throws ShapeError on inconsistent axis counts, non-positive values or a
  /// group count that does not divide both channel counts.
  void check() const;

  bool operator==(const ConvSpec&) const = default;
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

/// Grouped cross-correlation. Output channel o of group g sees input channels
/// [g FM_i/G, (g+1) FM_i/G). Per output element the sum runs over
/// (ic, kt, kh, kw) in that order and the bias is added last, so the result
/// is bit-identical to the reference path for any thread count.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                       const ConvSpec& spec);

template <typename T>
ConvGrads<T> conv_backward(const Tensor<T>& input, const Tensor<T>& weights, const ConvSpec& spec,
                           const Tensor<T>& grad_output, bool with_bias = false);

/// Rank-3 convenience wrappers; they reject 2D specs.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                         const ConvSpec& spec);
template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& weights, const ConvSpec& spec,
                             const Tensor<T>& grad_output, bool with_bias = false);

namespace reference {

/// Serial nested-loop convolution used as the oracle for the parallel path.
template <typename T>
Tensor<T> conv_forward_direct(const Tensor<T>& input, const Tensor<T>& weights,
                              const Tensor<T>* bias, const ConvSpec& spec);

template <typename T>
ConvGrads<T> conv_backward_direct(const Tensor<T>& input, const Tensor<T>& weights,
                                  const ConvSpec& spec, const Tensor<T>& grad_output,
                                  bool with_bias = false);

}  // namespace reference

struct PoolSpec {
  std::vector<int> window;
  std::vector<int> stride;
  std::vector<int> padding;

  static PoolSpec pool2d(int window, int stride, int pad);
  Dims output_spatial(const Dims& in_spatial) const;
  bool operator==(const PoolSpec&) const = default;
};

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  /// Flat input index of the selected element, one per output element.
  std::vector<std::int64_t> argmax;
};

/// Max pooling with implicit -inf padding. Ties go to the lowest flat index.
template <typename T>
MaxPoolResult<T> maxpool_forward(const Tensor<T>& input, const PoolSpec& spec);
template <typename T>
Tensor<T> maxpool_backward(const Dims& input_dims, const std::vector<std::int64_t>& argmax,
                           const Tensor<T>& grad_output);

/// Output bin i along an axis averages [floor(i In / Out), ceil((i+1) In / Out)).
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& input, const Dims& out_spatial);
template <typename T>
Tensor<T> adaptive_avg_pool_backward(const Dims& input_dims, const Tensor<T>& grad_output);

/// Mean over all spatial axes: [N, C, ...] -> [N, C].
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);
template <typename T>
Tensor<T> global_avg_pool_backward(const Dims& input_dims, const Tensor<T>& grad_output);

enum class BatchNormMode { train, eval };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;        // x_hat
  std::vector<double> inv_std;  // per channel
  BatchNormMode mode = BatchNormMode::train;
};

/// Per-channel normalization over (N, spatial...). Train mode uses biased batch
/// statistics and moves the running mean / unbiased variance by momentum 0.1.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                            Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormMode mode,
                            BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                                     const Tensor<T>& grad_output);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output);

/// Align-corners bilinear resize of the last two axes.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, std::int64_t out_h, std::int64_t out_w);
template <typename T>
Tensor<T> bilinear_upsample_backward(const Dims& input_dims, const Tensor<T>& grad_output);

/// [N, D] x [K, D]^T + bias -> [N, K]
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_output);

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
};

/// Mean over rows of -log softmax(logits)[label]; grad = (softmax - onehot) / N.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

/// Inverted dropout with a counter-based mask; identity when p == 0.
template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& input, double p, std::uint64_t seed);
template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, double p, std::uint64_t seed);

}  // namespace pyconv
