#include <algorithm>
#include <cmath>
#include <limits>

#include "pyconv/nnops.hpp"
#include "pyconv/rng.hpp"

namespace pyconv {

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.dims());
  const std::int64_t n = input.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  if (input.dims() != grad_output.dims()) throw ShapeError("relu_backward: shape mismatch");
  Tensor<T> g(input.dims());
  const std::int64_t n = input.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) g[i] = input[i] > T(0) ? grad_output[i] : T(0);
  return g;
}

namespace {

struct Taps {
  std::int64_t lo = 0, hi = 0;
  double frac = 0.0;
};

// Align-corners source coordinate for each destination index.
std::vector<Taps> taps(std::int64_t in, std::int64_t out) {
  std::vector<Taps> t(static_cast<std::size_t>(out));
  for (std::int64_t i = 0; i < out; ++i) {
    const double src = out == 1 ? 0.0 : static_cast<double>(i) * (in - 1) / (out - 1);
    std::int64_t lo = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(src)), in - 1);
    const std::int64_t hi = std::min(lo + 1, in - 1);
    t[static_cast<std::size_t>(i)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return t;
}

Dims resized(const Dims& d, std::int64_t h, std::int64_t w) {
  Dims out = d;
  out[out.size() - 2] = h;
  out[out.size() - 1] = w;
  return out;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, std::int64_t out_h, std::int64_t out_w) {
  if (input.rank() < 3) throw ShapeError("bilinear_upsample: needs spatial axes");
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_upsample: output extents must be >= 1");
  const std::int64_t in_h = input.dim(input.rank() - 2);
  const std::int64_t in_w = input.dim(input.rank() - 1);
  Tensor<T> out(resized(input.dims(), out_h, out_w));
  const auto th = taps(in_h, out_h);
  const auto tw = taps(in_w, out_w);
  const std::int64_t planes = input.size() / (in_h * in_w);
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const T* in = input.raw() + pl * in_h * in_w;
    T* o = out.raw() + pl * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const Taps& a = th[static_cast<std::size_t>(y)];
      for (std::int64_t x = 0; x < out_w; ++x) {
        const Taps& b = tw[static_cast<std::size_t>(x)];
        const double top = in[a.lo * in_w + b.lo] * (1.0 - b.frac) + in[a.lo * in_w + b.hi] * b.frac;
        const double bot = in[a.hi * in_w + b.lo] * (1.0 - b.frac) + in[a.hi * in_w + b.hi] * b.frac;
        o[y * out_w + x] = static_cast<T>(top * (1.0 - a.frac) + bot * a.frac);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_upsample_backward(const Dims& input_dims, const Tensor<T>& grad_output) {
  const std::int64_t r = static_cast<std::int64_t>(input_dims.size());
  const std::int64_t in_h = input_dims[r - 2], in_w = input_dims[r - 1];
  const std::int64_t out_h = grad_output.dim(grad_output.rank() - 2);
  const std::int64_t out_w = grad_output.dim(grad_output.rank() - 1);
  Tensor<T> gin(input_dims);
  const auto th = taps(in_h, out_h);
  const auto tw = taps(in_w, out_w);
  const std::int64_t planes = gin.size() / (in_h * in_w);
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    T* g = gin.raw() + pl * in_h * in_w;
    const T* go = grad_output.raw() + pl * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const Taps& a = th[static_cast<std::size_t>(y)];
      for (std::int64_t x = 0; x < out_w; ++x) {
        const Taps& b = tw[static_cast<std::size_t>(x)];
        const double v = go[y * out_w + x];
        g[a.lo * in_w + b.lo] += static_cast<T>(v * (1.0 - a.frac) * (1.0 - b.frac));
        g[a.lo * in_w + b.hi] += static_cast<T>(v * (1.0 - a.frac) * b.frac);
        g[a.hi * in_w + b.lo] += static_cast<T>(v * a.frac * (1.0 - b.frac));
        g[a.hi * in_w + b.hi] += static_cast<T>(v * a.frac * b.frac);
      }
    }
  }
  return gin;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias) {
  if (input.rank() != 2 || weights.rank() != 2 || input.dim(1) != weights.dim(1)) {
    throw ShapeError("linear: input " + to_string(input.dims()) + " vs weights " +
                     to_string(weights.dims()));
  }
  const std::int64_t n = input.dim(0), d = input.dim(1), k = weights.dim(0);
  if (bias && bias->size() != k) throw ShapeError("linear: bias length mismatch");
  Tensor<T> out(Dims{n, k});
#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < k; ++o) {
    const T* w = weights.raw() + o * d;
    for (std::int64_t i = 0; i < n; ++i) {
      const T* x = input.raw() + i * d;
      T acc = 0;
      for (std::int64_t j = 0; j < d; ++j) acc += x[j] * w[j];
      out[i * k + o] = bias ? acc + (*bias)[o] : acc;
    }
  }
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_output) {
  const std::int64_t n = input.dim(0), d = input.dim(1), k = weights.dim(0);
  if (grad_output.dims() != Dims{n, k}) throw ShapeError("linear_backward: shape mismatch");
  LinearGrads<T> g{Tensor<T>(input.dims()), Tensor<T>(weights.dims()), Tensor<T>(Dims{k})};
#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < k; ++o) {
    T* gw = g.weights.raw() + o * d;
    T gb = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const T go = grad_output[i * k + o];
      gb += go;
      const T* x = input.raw() + i * d;
      for (std::int64_t j = 0; j < d; ++j) gw[j] += go * x[j];
    }
    g.bias[o] = gb;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    T* gx = g.input.raw() + i * d;
    for (std::int64_t o = 0; o < k; ++o) {
      const T go = grad_output[i * k + o];
      const T* w = weights.raw() + o * d;
      for (std::int64_t j = 0; j < d; ++j) gx[j] += go * w[j];
    }
  }
  return g;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be [N, K]");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw ShapeError("softmax_cross_entropy: label count mismatch");
  }
  LossResult<T> r{0.0, Tensor<T>(logits.dims())};
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= k) throw ShapeError("softmax_cross_entropy: label out of range");
    const T* z = logits.raw() + i * k;
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < k; ++j) zmax = std::max<double>(zmax, z[j]);
    double denom = 0.0;
    for (std::int64_t j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    const double log_denom = std::log(denom);
    r.loss += -(z[label] - zmax - log_denom);
    for (std::int64_t j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - zmax - log_denom);
      r.grad[i * k + j] = static_cast<T>((p - (j == label ? 1.0 : 0.0)) / static_cast<double>(n));
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

namespace {

template <typename T>
Tensor<T> apply_dropout_mask(const Tensor<T>& t, double p, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (p == 0.0) return t;
  Tensor<T> out(t.dims());
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  const std::int64_t n = t.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = rng::uniform(seed, static_cast<std::uint64_t>(i)) < p ? T(0) : t[i] * scale;
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& input, double p, std::uint64_t seed) {
  return apply_dropout_mask(input, p, seed);
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, double p, std::uint64_t seed) {
  return apply_dropout_mask(grad_output, p, seed);
}

#define PYCONV_INSTANTIATE(T)                                                                   \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                         \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> bilinear_upsample<T>(const Tensor<T>&, std::int64_t, std::int64_t);        \
  template Tensor<T> bilinear_upsample_backward<T>(const Dims&, const Tensor<T>&);              \
  template Tensor<T> linear_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);   \
  template LinearGrads<T> linear_backward<T>(const Tensor<T>&, const Tensor<T>&,                \
                                             const Tensor<T>&);                                 \
  template LossResult<T> softmax_cross_entropy<T>(const Tensor<T>&, const std::vector<int>&);   \
  template Tensor<T> dropout_forward<T>(const Tensor<T>&, double, std::uint64_t);               \
  template Tensor<T> dropout_backward<T>(const Tensor<T>&, double, std::uint64_t);

PYCONV_INSTANTIATE(float)
PYCONV_INSTANTIATE(double)

}  // namespace pyconv
