#include <algorithm>
#include <array>
#include <vector>

#include "conv_geometry.hpp"
#include "pyconv/nnops.hpp"

namespace pyconv {

ConvSpec ConvSpec::conv2d(std::int64_t in, std::int64_t out, int k, int stride, int pad,
                          std::int64_t groups, int dilation) {
  ConvSpec s;
  s.kernel = {k, k};
  s.stride = {stride, stride};
  s.padding = {pad, pad};
  s.dilation = {dilation, dilation};
  s.groups = groups;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

ConvSpec ConvSpec::conv3d(std::int64_t in, std::int64_t out, std::vector<int> kernel,
                          std::vector<int> stride, std::vector<int> pad, std::int64_t groups) {
  ConvSpec s;
  s.kernel = std::move(kernel);
  s.stride = std::move(stride);
  s.padding = std::move(pad);
  s.dilation = {1, 1, 1};
  s.groups = groups;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

void ConvSpec::check() const {
  const std::size_t r = kernel.size();
  if (r != 2 && r != 3) throw ShapeError("conv: spatial rank must be 2 or 3");
  if (stride.size() != r || padding.size() != r || dilation.size() != r) {
    throw ShapeError("conv: kernel/stride/padding/dilation axis counts differ");
  }
  for (std::size_t i = 0; i < r; ++i) {
    if (kernel[i] < 1 || stride[i] < 1 || dilation[i] < 1 || padding[i] < 0) {
      throw ShapeError("conv: kernel, stride and dilation must be >= 1 and padding >= 0");
    }
  }
  if (groups < 1 || in_channels < 1 || out_channels < 1) {
    throw ShapeError("conv: channel and group counts must be positive");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("conv: groups " + std::to_string(groups) + " must divide in " +
                     std::to_string(in_channels) + " and out " + std::to_string(out_channels));
  }
}

Dims ConvSpec::weight_dims() const {
  Dims d{out_channels, in_channels / groups};
  for (int k : kernel) d.push_back(k);
  return d;
}

std::int64_t ConvSpec::weight_count() const { return product(weight_dims()); }

Dims ConvSpec::output_spatial(const Dims& in_spatial) const {
  if (in_spatial.size() != kernel.size()) throw ShapeError("conv: input spatial rank mismatch");
  Dims out(in_spatial.size());
  for (std::size_t i = 0; i < in_spatial.size(); ++i) {
    const std::int64_t span = static_cast<std::int64_t>(dilation[i]) * (kernel[i] - 1) + 1;
    const std::int64_t padded = in_spatial[i] + 2 * padding[i];
    if (padded < span) {
      throw ShapeError("conv: kernel extent " + std::to_string(span) + " exceeds padded input " +
                       std::to_string(padded));
    }
    out[i] = (padded - span) / stride[i] + 1;
  }
  return out;
}

Dims ConvSpec::output_dims(const Dims& input_dims) const {
  check();
  if (input_dims.size() != kernel.size() + 2) {
    throw ShapeError("conv: input " + to_string(input_dims) + " does not match spatial rank");
  }
  if (input_dims[1] != in_channels) {
    throw ShapeError("conv: input has " + std::to_string(input_dims[1]) + " channels, spec expects " +
                     std::to_string(in_channels));
  }
  Dims out{input_dims[0], out_channels};
  for (auto e : output_spatial(Dims(input_dims.begin() + 2, input_dims.end()))) out.push_back(e);
  return out;
}

namespace detail {

ConvGeometry make_geometry(const Dims& input_dims, const Dims& weight_dims, const ConvSpec& spec) {
  const Dims out_dims = spec.output_dims(input_dims);
  if (weight_dims != spec.weight_dims()) {
    throw ShapeError("conv: weights " + to_string(weight_dims) + " expected " +
                     to_string(spec.weight_dims()));
  }
  ConvGeometry g;
  g.batch = input_dims[0];
  g.in_c = spec.in_channels;
  g.out_c = spec.out_channels;
  g.groups = spec.groups;
  const bool vol = spec.spatial_rank() == 3;
  const std::size_t o = vol ? 1 : 0;
  if (vol) {
    g.in_d = input_dims[2];
    g.out_d = out_dims[2];
    g.kd = spec.kernel[0];
    g.sd = spec.stride[0];
    g.pd = spec.padding[0];
    g.dd = spec.dilation[0];
  }
  g.in_h = input_dims[2 + o];
  g.in_w = input_dims[3 + o];
  g.out_h = out_dims[2 + o];
  g.out_w = out_dims[3 + o];
  g.kh = spec.kernel[o];
  g.kw = spec.kernel[o + 1];
  g.sh = spec.stride[o];
  g.sw = spec.stride[o + 1];
  g.ph = spec.padding[o];
  g.pw = spec.padding[o + 1];
  g.dh = spec.dilation[o];
  g.dw = spec.dilation[o + 1];
  return g;
}

}  // namespace detail

namespace {

using detail::ConvGeometry;

constexpr std::int64_t kForwardTile = 128;
constexpr std::int64_t kBackwardColumnBudget = std::int64_t{1} << 20;

// Output pixels [p0, p0 + count) split into runs that share one output row.
struct Run {
  std::int64_t j, len, od, oh, ow0;
};

std::vector<Run> output_runs(const ConvGeometry& g, std::int64_t p0, std::int64_t count) {
  const std::int64_t hw = g.out_h * g.out_w;
  std::vector<Run> runs;
  for (std::int64_t j = 0; j < count;) {
    const std::int64_t pos = p0 + j;
    const std::int64_t rem = pos % hw;
    const std::int64_t ow0 = rem % g.out_w;
    const std::int64_t len = std::min(g.out_w - ow0, count - j);
    runs.push_back({j, len, pos / hw, rem / g.out_w, ow0});
    j += len;
  }
  return runs;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Calls fn(run, first_valid_ow, end_valid_ow, source_row, column_offset) for
// kernel tap (a, b, c); source_row is null when the tap row is padding.
template <typename Fn>
void for_each_tap_run(const std::vector<Run>& runs, const ConvGeometry& g, int a, int b, int c, Fn&& fn) {
  const std::int64_t off = static_cast<std::int64_t>(c) * g.dw - g.pw;
  for (const Run& r : runs) {
    const std::int64_t id = r.od * g.sd - g.pd + a * g.dd;
    const std::int64_t ih = r.oh * g.sh - g.ph + b * g.dh;
    const std::int64_t end = r.ow0 + r.len;
    if (id < 0 || id >= g.in_d || ih < 0 || ih >= g.in_h) {
      fn(r, end, end, std::int64_t{-1}, off);
      continue;
    }
    const std::int64_t lo = std::clamp(floor_div(-off + g.sw - 1, g.sw), r.ow0, end);
    const std::int64_t hi = std::clamp(floor_div(g.in_w - 1 - off, g.sw) + 1, lo, end);
    fn(r, lo, hi, (id * g.in_h + ih) * g.in_w, off);
  }
}

// Fill col[k * count + j] for output pixels [p0, p0 + count) of one image and
// one channel group. `in` points at the first input channel of the group.
template <typename T>
void im2col(const T* in, const ConvGeometry& g, const std::vector<Run>& runs, std::int64_t count, T* col) {
  std::int64_t k = 0;
  for (std::int64_t ic = 0; ic < g.in_group(); ++ic) {
    const T* chan = in + ic * g.in_plane();
    for (int a = 0; a < g.kd; ++a) {
      for (int b = 0; b < g.kh; ++b) {
        for (int c = 0; c < g.kw; ++c, ++k) {
          T* row = col + k * count;
          for_each_tap_run(runs, g, a, b, c,
                           [&](const Run& r, std::int64_t lo, std::int64_t hi, std::int64_t src, std::int64_t off) {
                             T* dst = row + r.j - r.ow0;
                             for (std::int64_t ow = r.ow0; ow < lo; ++ow) dst[ow] = T(0);
                             if (src >= 0) {
                               const T* s = chan + src + off;
                               for (std::int64_t ow = lo; ow < hi; ++ow) dst[ow] = s[ow * g.sw];
                             }
                             for (std::int64_t ow = hi; ow < r.ow0 + r.len; ++ow) dst[ow] = T(0);
                           });
        }
      }
    }
  }
}

// Scatter-add rows of one input channel's column block back into the image.
template <typename T>
void col2im_channel(const T* col_rows, const ConvGeometry& g, const std::vector<Run>& runs, std::int64_t count,
                    T* chan) {
  std::int64_t k = 0;
  for (int a = 0; a < g.kd; ++a) {
    for (int b = 0; b < g.kh; ++b) {
      for (int c = 0; c < g.kw; ++c, ++k) {
        const T* row = col_rows + k * count;
        for_each_tap_run(runs, g, a, b, c,
                         [&](const Run& r, std::int64_t lo, std::int64_t hi, std::int64_t src, std::int64_t off) {
                           if (src < 0) return;
                           const T* s = row + r.j - r.ow0;
                           T* d = chan + src + off;
                           for (std::int64_t ow = lo; ow < hi; ++ow) d[ow * g.sw] += s[ow];
                         });
      }
    }
  }
}

// out[o][j] = sum_k w[o][k] * rows[k][j] for `nout` consecutive filters, k
// ascending, each output element with its own accumulator.
template <typename T, int Block>
void gemm_block(const T* w, std::int64_t patch, const T* const* rows, std::int64_t count,
                std::array<std::array<T, kForwardTile>, 4>& acc) {
  for (int o = 0; o < Block; ++o) std::fill_n(acc[o].begin(), count, T(0));
  for (std::int64_t k = 0; k < patch; ++k) {
    const T* r = rows[k];
    if constexpr (Block == 4) {
      const T w0 = w[k], w1 = w[patch + k], w2 = w[2 * patch + k], w3 = w[3 * patch + k];
      T* a0 = acc[0].data();
      T* a1 = acc[1].data();
      T* a2 = acc[2].data();
      T* a3 = acc[3].data();
      for (std::int64_t j = 0; j < count; ++j) {
        const T x = r[j];
        a0[j] += w0 * x;
        a1[j] += w1 * x;
        a2[j] += w2 * x;
        a3[j] += w3 * x;
      }
    } else {
      const T w0 = w[k];
      T* a0 = acc[0].data();
      for (std::int64_t j = 0; j < count; ++j) a0[j] += w0 * r[j];
    }
  }
}

// Dot product with eight fixed partial lanes; the summation order depends only
// on `count`, never on the thread schedule.
template <typename T>
T lane_dot(const T* a, const T* b, std::int64_t count) {
  std::array<T, 8> s{};
  std::int64_t j = 0;
  for (; j + 8 <= count; j += 8) {
    for (int l = 0; l < 8; ++l) s[l] += a[j + l] * b[j + l];
  }
  for (; j < count; ++j) s[j & 7] += a[j] * b[j];
  return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

}  // namespace

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                       const ConvSpec& spec) {
  const ConvGeometry g = detail::make_geometry(input.dims(), weights.dims(), spec);
  if (bias && bias->size() != g.out_c) throw ShapeError("conv: bias length mismatch");
  Tensor<T> out(spec.output_dims(input.dims()));

  const std::int64_t patch = g.patch();
  const std::int64_t plane = g.out_plane();
  const std::int64_t tiles = (plane + kForwardTile - 1) / kForwardTile;
  const std::int64_t work = g.batch * g.groups * tiles;
  const bool pointwise = g.pointwise();
  const T* in_base = input.raw();
  const T* w_base = weights.raw();
  T* out_base = out.raw();

#pragma omp parallel
  {
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(patch * kForwardTile));
    std::vector<const T*> rows(static_cast<std::size_t>(patch));
    std::array<std::array<T, kForwardTile>, 4> acc;

#pragma omp for schedule(static)
    for (std::int64_t item = 0; item < work; ++item) {
      const std::int64_t tile = item % tiles;
      const std::int64_t grp = (item / tiles) % g.groups;
      const std::int64_t n = item / (tiles * g.groups);
      const std::int64_t p0 = tile * kForwardTile;
      const std::int64_t count = std::min(kForwardTile, plane - p0);
      const T* in = in_base + (n * g.in_c + grp * g.in_group()) * g.in_plane();

      if (pointwise) {
        for (std::int64_t k = 0; k < patch; ++k) rows[k] = in + k * g.in_plane() + p0;
      } else {
        im2col(in, g, output_runs(g, p0, count), count, col.data());
        for (std::int64_t k = 0; k < patch; ++k) rows[k] = col.data() + k * count;
      }

      const std::int64_t oc_begin = grp * g.out_group();
      const std::int64_t oc_end = oc_begin + g.out_group();
      std::int64_t oc = oc_begin;
      auto store = [&](std::int64_t o, const std::array<T, kForwardTile>& a) {
        T* dst = out_base + (n * g.out_c + o) * plane + p0;
        if (bias) {
          const T b = (*bias)[o];
          for (std::int64_t j = 0; j < count; ++j) dst[j] = a[j] + b;
        } else {
          std::copy_n(a.begin(), count, dst);
        }
      };
      for (; oc + 4 <= oc_end; oc += 4) {
        gemm_block<T, 4>(w_base + oc * patch, patch, rows.data(), count, acc);
        for (int o = 0; o < 4; ++o) store(oc + o, acc[o]);
      }
      for (; oc < oc_end; ++oc) {
        gemm_block<T, 1>(w_base + oc * patch, patch, rows.data(), count, acc);
        store(oc, acc[0]);
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv_backward(const Tensor<T>& input, const Tensor<T>& weights, const ConvSpec& spec,
                           const Tensor<T>& grad_output, bool with_bias) {
  const ConvGeometry g = detail::make_geometry(input.dims(), weights.dims(), spec);
  if (grad_output.dims() != spec.output_dims(input.dims())) {
    throw ShapeError("conv_backward: grad_output " + to_string(grad_output.dims()) +
                     " does not match forward output");
  }
  ConvGrads<T> grads{Tensor<T>(input.dims()), Tensor<T>(weights.dims()), Tensor<T>()};

  const std::int64_t patch = g.patch();
  const std::int64_t kvol = g.kernel_volume();
  const std::int64_t plane = g.out_plane();
  const std::int64_t tile =
      std::clamp<std::int64_t>(kBackwardColumnBudget / std::max<std::int64_t>(patch, 1), 64, plane);
  std::vector<T> col(static_cast<std::size_t>(patch * std::min(tile, plane)));
  std::vector<T> gcol(col.size());

  if (with_bias) {
    grads.bias = Tensor<T>(Dims{g.out_c});
    T* gb = grads.bias.raw();
    const T* go = grad_output.raw();
#pragma omp parallel for schedule(static)
    for (std::int64_t oc = 0; oc < g.out_c; ++oc) {
      T s = 0;
      for (std::int64_t n = 0; n < g.batch; ++n) {
        const T* row = go + (n * g.out_c + oc) * plane;
        for (std::int64_t j = 0; j < plane; ++j) s += row[j];
      }
      gb[oc] = s;
    }
  }

  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t grp = 0; grp < g.groups; ++grp) {
      const T* in = input.raw() + (n * g.in_c + grp * g.in_group()) * g.in_plane();
      T* gin = grads.input.raw() + (n * g.in_c + grp * g.in_group()) * g.in_plane();
      const std::int64_t oc_begin = grp * g.out_group();
      const T* go = grad_output.raw() + (n * g.out_c + oc_begin) * plane;
      const T* w = weights.raw() + oc_begin * patch;
      T* gw = grads.weights.raw() + oc_begin * patch;

      for (std::int64_t p0 = 0; p0 < plane; p0 += tile) {
        const std::int64_t count = std::min(tile, plane - p0);
        const std::vector<Run> runs = output_runs(g, p0, count);

#pragma omp parallel for schedule(static)
        for (std::int64_t ic = 0; ic < g.in_group(); ++ic) {
          // im2col restricted to one channel: reuse the full routine on a
          // single-channel view.
          ConvGeometry one = g;
          one.in_c = 1;
          one.groups = 1;
          im2col(in + ic * g.in_plane(), one, runs, count, col.data() + ic * kvol * count);
        }

#pragma omp parallel for schedule(static)
        for (std::int64_t o = 0; o < g.out_group(); ++o) {
          const T* gorow = go + o * plane + p0;
          T* gwrow = gw + o * patch;
          for (std::int64_t k = 0; k < patch; ++k) {
            gwrow[k] += lane_dot(gorow, col.data() + k * count, count);
          }
        }

#pragma omp parallel for schedule(static)
        for (std::int64_t k = 0; k < patch; ++k) {
          T* row = gcol.data() + k * count;
          std::fill_n(row, count, T(0));
          for (std::int64_t o = 0; o < g.out_group(); ++o) {
            const T wk = w[o * patch + k];
            const T* gorow = go + o * plane + p0;
            for (std::int64_t j = 0; j < count; ++j) row[j] += wk * gorow[j];
          }
        }

#pragma omp parallel for schedule(static)
        for (std::int64_t ic = 0; ic < g.in_group(); ++ic) {
          ConvGeometry one = g;
          one.in_c = 1;
          one.groups = 1;
          col2im_channel(gcol.data() + ic * kvol * count, one, runs, count, gin + ic * g.in_plane());
        }
      }
    }
  }
  return grads;
}

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                         const ConvSpec& spec) {
  if (spec.spatial_rank() != 3) throw ShapeError("conv3d_forward: spec must have 3 spatial axes");
  return conv_forward(input, weights, bias, spec);
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& weights, const ConvSpec& spec,
                             const Tensor<T>& grad_output, bool with_bias) {
  if (spec.spatial_rank() != 3) throw ShapeError("conv3d_backward: spec must have 3 spatial axes");
  return conv_backward(input, weights, spec, grad_output, with_bias);
}

#define PYCONV_INSTANTIATE(T)                                                                \
  template Tensor<T> conv_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,   \
                                     const ConvSpec&);                                       \
  template ConvGrads<T> conv_backward<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&, \
                                         const Tensor<T>&, bool);                            \
  template Tensor<T> conv3d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, \
                                       const ConvSpec&);                                     \
  template ConvGrads<T> conv3d_backward<T>(const Tensor<T>&, const Tensor<T>&,               \
                                           const ConvSpec&, const Tensor<T>&, bool);

PYCONV_INSTANTIATE(float)
PYCONV_INSTANTIATE(double)

}  // namespace pyconv
