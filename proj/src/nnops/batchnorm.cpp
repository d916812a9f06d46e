#include <cmath>

#include "pyconv/nnops.hpp"

namespace pyconv {

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                            Tensor<T>& running_mean, Tensor<T>& running_var, BatchNormMode mode,
                            BatchNormCache<T>* cache) {
  const std::int64_t c = input.channels();
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ShapeError("batchnorm: parameter length does not match " + std::to_string(c) +
                     " channels");
  }
  const std::int64_t batch = input.dim(0);
  const std::int64_t plane = input.spatial_size();
  const std::int64_t count = batch * plane;
  Tensor<T> out(input.dims());
  if (cache) {
    cache->normalized = Tensor<T>(input.dims());
    cache->inv_std.assign(static_cast<std::size_t>(c), 0.0);
    cache->mode = mode;
  }

#pragma omp parallel for schedule(static)
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double mean = 0.0, var = 0.0;
    if (mode == BatchNormMode::train) {
      for (std::int64_t n = 0; n < batch; ++n) {
        const T* x = input.raw() + (n * c + ch) * plane;
        for (std::int64_t j = 0; j < plane; ++j) mean += x[j];
      }
      mean /= static_cast<double>(count);
      for (std::int64_t n = 0; n < batch; ++n) {
        const T* x = input.raw() + (n * c + ch) * plane;
        for (std::int64_t j = 0; j < plane; ++j) {
          const double d = x[j] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * running_mean[ch] +
                                        kBatchNormMomentum * mean);
      running_var[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * running_var[ch] +
                                       kBatchNormMomentum * unbiased);
    } else {
      mean = running_mean[ch];
      var = running_var[ch];
    }
    const double inv_std = 1.0 / std::sqrt(var + kBatchNormEpsilon);
    if (cache) cache->inv_std[static_cast<std::size_t>(ch)] = inv_std;
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t off = (n * c + ch) * plane;
      for (std::int64_t j = 0; j < plane; ++j) {
        const T xhat = static_cast<T>((input[off + j] - mean) * inv_std);
        if (cache) cache->normalized[off + j] = xhat;
        out[off + j] = gamma[ch] * xhat + beta[ch];
      }
    }
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                                     const Tensor<T>& grad_output) {
  const Tensor<T>& xhat = cache.normalized;
  if (xhat.dims() != grad_output.dims()) throw ShapeError("batchnorm_backward: shape mismatch");
  const std::int64_t c = xhat.channels();
  const std::int64_t batch = xhat.dim(0);
  const std::int64_t plane = xhat.spatial_size();
  const double count = static_cast<double>(batch * plane);
  BatchNormGrads<T> g{Tensor<T>(xhat.dims()), Tensor<T>(Dims{c}), Tensor<T>(Dims{c})};

#pragma omp parallel for schedule(static)
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t off = (n * c + ch) * plane;
      for (std::int64_t j = 0; j < plane; ++j) {
        sum_dy += grad_output[off + j];
        sum_dy_xhat += static_cast<double>(grad_output[off + j]) * xhat[off + j];
      }
    }
    g.beta[ch] = static_cast<T>(sum_dy);
    g.gamma[ch] = static_cast<T>(sum_dy_xhat);
    const double scale = gamma[ch] * cache.inv_std[static_cast<std::size_t>(ch)];
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t off = (n * c + ch) * plane;
      for (std::int64_t j = 0; j < plane; ++j) {
        if (cache.mode == BatchNormMode::train) {
          g.input[off + j] = static_cast<T>(
              scale * (grad_output[off + j] - sum_dy / count - xhat[off + j] * sum_dy_xhat / count));
        } else {
          g.input[off + j] = static_cast<T>(scale * grad_output[off + j]);
        }
      }
    }
  }
  return g;
}

template Tensor<float> batchnorm_forward<float>(const Tensor<float>&, const Tensor<float>&,
                                                const Tensor<float>&, Tensor<float>&,
                                                Tensor<float>&, BatchNormMode,
                                                BatchNormCache<float>*);
template Tensor<double> batchnorm_forward<double>(const Tensor<double>&, const Tensor<double>&,
                                                  const Tensor<double>&, Tensor<double>&,
                                                  Tensor<double>&, BatchNormMode,
                                                  BatchNormCache<double>*);
template BatchNormGrads<float> batchnorm_backward<float>(const BatchNormCache<float>&,
                                                         const Tensor<float>&,
                                                         const Tensor<float>&);
template BatchNormGrads<double> batchnorm_backward<double>(const BatchNormCache<double>&,
                                                           const Tensor<double>&,
                                                           const Tensor<double>&);

}  // namespace pyconv
