#include <cmath>
#include <limits>

#include "pyconv/nnops.hpp"

namespace pyconv {

PoolSpec PoolSpec::pool2d(int window, int stride, int pad) {
  return PoolSpec{{window, window}, {stride, stride}, {pad, pad}};
}

Dims PoolSpec::output_spatial(const Dims& in_spatial) const {
  if (in_spatial.size() != window.size() || stride.size() != window.size() ||
      padding.size() != window.size()) {
    throw ShapeError("pool: spatial rank mismatch");
  }
  Dims out(in_spatial.size());
  for (std::size_t i = 0; i < in_spatial.size(); ++i) {
    if (window[i] < 1 || stride[i] < 1 || padding[i] < 0) {
      throw ShapeError("pool: window and stride must be >= 1");
    }
    const std::int64_t padded = in_spatial[i] + 2 * padding[i];
    if (window[i] > padded) {
      throw ShapeError("pool: window " + std::to_string(window[i]) + " larger than padded input " +
                       std::to_string(padded));
    }
    out[i] = (padded - window[i]) / stride[i] + 1;
  }
  return out;
}

namespace {

// (D, H, W) view of the spatial axes; 2D maps to D = 1.
struct Box {
  std::int64_t d = 1, h = 1, w = 1;
};

Box box_of(const Dims& spatial) {
  if (spatial.size() == 2) return {1, spatial[0], spatial[1]};
  if (spatial.size() == 3) return {spatial[0], spatial[1], spatial[2]};
  throw ShapeError("pool: expected 2 or 3 spatial axes");
}

struct Window {
  int kd = 1, kh = 1, kw = 1, sd = 1, sh = 1, sw = 1, pd = 0, ph = 0, pw = 0;
};

Window window_of(const PoolSpec& s) {
  if (s.window.size() == 2) {
    return {1, s.window[0], s.window[1], 1, s.stride[0], s.stride[1], 0, s.padding[0], s.padding[1]};
  }
  return {s.window[0], s.window[1], s.window[2], s.stride[0], s.stride[1],
          s.stride[2], s.padding[0], s.padding[1], s.padding[2]};
}

Dims with_spatial(const Dims& dims, const Dims& spatial) {
  Dims out{dims[0], dims[1]};
  out.insert(out.end(), spatial.begin(), spatial.end());
  return out;
}

std::int64_t bin_begin(std::int64_t i, std::int64_t in, std::int64_t out) { return (i * in) / out; }
std::int64_t bin_end(std::int64_t i, std::int64_t in, std::int64_t out) {
  return ((i + 1) * in + out - 1) / out;
}

}  // namespace

template <typename T>
MaxPoolResult<T> maxpool_forward(const Tensor<T>& input, const PoolSpec& spec) {
  if (input.rank() < 4) throw ShapeError("maxpool: input rank must be 4 or 5");
  const Dims in_sp = input.spatial_dims();
  const Dims out_sp = spec.output_spatial(in_sp);
  const Box ib = box_of(in_sp);
  const Box ob = box_of(out_sp);
  const Window w = window_of(spec);
  MaxPoolResult<T> r{Tensor<T>(with_spatial(input.dims(), out_sp)), {}};
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  const std::int64_t planes = input.dim(0) * input.dim(1);
  const std::int64_t in_plane = ib.d * ib.h * ib.w;
  const std::int64_t out_plane = ob.d * ob.h * ob.w;

#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const T* in = input.raw() + pl * in_plane;
    for (std::int64_t od = 0; od < ob.d; ++od) {
      for (std::int64_t oh = 0; oh < ob.h; ++oh) {
        for (std::int64_t ow = 0; ow < ob.w; ++ow) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (int a = 0; a < w.kd; ++a) {
            const std::int64_t id = od * w.sd - w.pd + a;
            if (id < 0 || id >= ib.d) continue;
            for (int b = 0; b < w.kh; ++b) {
              const std::int64_t ih = oh * w.sh - w.ph + b;
              if (ih < 0 || ih >= ib.h) continue;
              for (int c = 0; c < w.kw; ++c) {
                const std::int64_t iw = ow * w.sw - w.pw + c;
                if (iw < 0 || iw >= ib.w) continue;
                const std::int64_t idx = (id * ib.h + ih) * ib.w + iw;
                // Window order is row-major, so the first strict maximum is
                // also the lowest flat index among ties.
                if (best_idx < 0 || in[idx] > best) {
                  best = in[idx];
                  best_idx = idx;
                }
              }
            }
          }
          const std::int64_t o = pl * out_plane + (od * ob.h + oh) * ob.w + ow;
          r.output[o] = best;
          r.argmax[static_cast<std::size_t>(o)] = pl * in_plane + best_idx;
        }
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const Dims& input_dims, const std::vector<std::int64_t>& argmax,
                           const Tensor<T>& grad_output) {
  if (static_cast<std::int64_t>(argmax.size()) != grad_output.size()) {
    throw ShapeError("maxpool_backward: argmax / grad_output length mismatch");
  }
  Tensor<T> gin(input_dims);
  const std::int64_t planes = input_dims[0] * input_dims[1];
  const std::int64_t out_plane = grad_output.size() / planes;
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    for (std::int64_t j = pl * out_plane; j < (pl + 1) * out_plane; ++j) {
      gin[argmax[static_cast<std::size_t>(j)]] += grad_output[j];
    }
  }
  return gin;
}

template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& input, const Dims& out_spatial) {
  const Dims in_sp = input.spatial_dims();
  if (in_sp.size() != out_spatial.size()) throw ShapeError("adaptive_avg_pool: rank mismatch");
  for (std::size_t i = 0; i < out_spatial.size(); ++i) {
    if (out_spatial[i] < 1) throw ShapeError("adaptive_avg_pool: output extent must be >= 1");
    if (out_spatial[i] > in_sp[i]) {
      throw ShapeError("adaptive_avg_pool: output extent exceeds input extent");
    }
  }
  const Box ib = box_of(in_sp);
  const Box ob = box_of(out_spatial);
  Tensor<T> out(with_spatial(input.dims(), out_spatial));
  const std::int64_t planes = input.dim(0) * input.dim(1);
  const std::int64_t in_plane = ib.d * ib.h * ib.w;
  const std::int64_t out_plane = ob.d * ob.h * ob.w;
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const T* in = input.raw() + pl * in_plane;
    for (std::int64_t od = 0; od < ob.d; ++od) {
      const std::int64_t d0 = bin_begin(od, ib.d, ob.d), d1 = bin_end(od, ib.d, ob.d);
      for (std::int64_t oh = 0; oh < ob.h; ++oh) {
        const std::int64_t h0 = bin_begin(oh, ib.h, ob.h), h1 = bin_end(oh, ib.h, ob.h);
        for (std::int64_t ow = 0; ow < ob.w; ++ow) {
          const std::int64_t w0 = bin_begin(ow, ib.w, ob.w), w1 = bin_end(ow, ib.w, ob.w);
          T s = 0;
          for (auto d = d0; d < d1; ++d)
            for (auto h = h0; h < h1; ++h)
              for (auto w = w0; w < w1; ++w) s += in[(d * ib.h + h) * ib.w + w];
          out[pl * out_plane + (od * ob.h + oh) * ob.w + ow] =
              s / static_cast<T>((d1 - d0) * (h1 - h0) * (w1 - w0));
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> adaptive_avg_pool_backward(const Dims& input_dims, const Tensor<T>& grad_output) {
  Tensor<T> gin(input_dims);
  const Box ib = box_of(gin.spatial_dims());
  const Box ob = box_of(grad_output.spatial_dims());
  const std::int64_t planes = input_dims[0] * input_dims[1];
  const std::int64_t in_plane = ib.d * ib.h * ib.w;
  const std::int64_t out_plane = ob.d * ob.h * ob.w;
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    T* g = gin.raw() + pl * in_plane;
    for (std::int64_t od = 0; od < ob.d; ++od) {
      const std::int64_t d0 = bin_begin(od, ib.d, ob.d), d1 = bin_end(od, ib.d, ob.d);
      for (std::int64_t oh = 0; oh < ob.h; ++oh) {
        const std::int64_t h0 = bin_begin(oh, ib.h, ob.h), h1 = bin_end(oh, ib.h, ob.h);
        for (std::int64_t ow = 0; ow < ob.w; ++ow) {
          const std::int64_t w0 = bin_begin(ow, ib.w, ob.w), w1 = bin_end(ow, ib.w, ob.w);
          const T v = grad_output[pl * out_plane + (od * ob.h + oh) * ob.w + ow] /
                      static_cast<T>((d1 - d0) * (h1 - h0) * (w1 - w0));
          for (auto d = d0; d < d1; ++d)
            for (auto h = h0; h < h1; ++h)
              for (auto w = w0; w < w1; ++w) g[(d * ib.h + h) * ib.w + w] += v;
        }
      }
    }
  }
  return gin;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  if (input.rank() < 3) throw ShapeError("global_avg_pool: input needs spatial axes");
  const std::int64_t planes = input.dim(0) * input.dim(1);
  const std::int64_t plane = input.spatial_size();
  Tensor<T> out(Dims{input.dim(0), input.dim(1)});
#pragma omp parallel for schedule(static)
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    T s = 0;
    const T* in = input.raw() + pl * plane;
    for (std::int64_t j = 0; j < plane; ++j) s += in[j];
    out[pl] = s / static_cast<T>(plane);
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Dims& input_dims, const Tensor<T>& grad_output) {
  Tensor<T> gin(input_dims);
  const std::int64_t planes = input_dims[0] * input_dims[1];
  if (grad_output.size() != planes) throw ShapeError("global_avg_pool_backward: shape mismatch");
  const std::int64_t plane = gin.size() / planes;
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const T v = grad_output[pl] / static_cast<T>(plane);
    std::fill_n(gin.raw() + pl * plane, plane, v);
  }
  return gin;
}

#define PYCONV_INSTANTIATE(T)                                                                    \
  template MaxPoolResult<T> maxpool_forward<T>(const Tensor<T>&, const PoolSpec&);               \
  template Tensor<T> maxpool_backward<T>(const Dims&, const std::vector<std::int64_t>&,          \
                                         const Tensor<T>&);                                      \
  template Tensor<T> adaptive_avg_pool<T>(const Tensor<T>&, const Dims&);                        \
  template Tensor<T> adaptive_avg_pool_backward<T>(const Dims&, const Tensor<T>&);               \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                       \
  template Tensor<T> global_avg_pool_backward<T>(const Dims&, const Tensor<T>&);

PYCONV_INSTANTIATE(float)
PYCONV_INSTANTIATE(double)

}  // namespace pyconv
