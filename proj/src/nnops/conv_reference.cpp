#include "conv_geometry.hpp"
#include "pyconv/nnops.hpp"

namespace pyconv::reference {

using detail::ConvGeometry;

template <typename T>
Tensor<T> conv_forward_direct(const Tensor<T>& input, const Tensor<T>& weights,
                              const Tensor<T>* bias, const ConvSpec& spec) {
  const ConvGeometry g = detail::make_geometry(input.dims(), weights.dims(), spec);
  if (bias && bias->size() != g.out_c) throw ShapeError("conv: bias length mismatch");
  Tensor<T> out(spec.output_dims(input.dims()));
  const std::int64_t cg = g.in_group();
  const std::int64_t og = g.out_group();

  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t oc = 0; oc < g.out_c; ++oc) {
      const std::int64_t grp = oc / og;
      for (std::int64_t od = 0; od < g.out_d; ++od) {
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            T acc = 0;
            for (std::int64_t ic = 0; ic < cg; ++ic) {
              const std::int64_t c = grp * cg + ic;
              for (int a = 0; a < g.kd; ++a) {
                const std::int64_t id = od * g.sd - g.pd + a * g.dd;
                for (int b = 0; b < g.kh; ++b) {
                  const std::int64_t ih = oh * g.sh - g.ph + b * g.dh;
                  for (int e = 0; e < g.kw; ++e) {
                    const std::int64_t iw = ow * g.sw - g.pw + e * g.dw;
                    if (id < 0 || id >= g.in_d || ih < 0 || ih >= g.in_h || iw < 0 ||
                        iw >= g.in_w) {
                      continue;
                    }
                    const T x = input[(((n * g.in_c + c) * g.in_d + id) * g.in_h + ih) * g.in_w + iw];
                    const T w = weights[(((oc * cg + ic) * g.kd + a) * g.kh + b) * g.kw + e];
                    acc += x * w;
                  }
                }
              }
            }
            const std::int64_t o = (((n * g.out_c + oc) * g.out_d + od) * g.out_h + oh) * g.out_w + ow;
            out[o] = bias ? acc + (*bias)[oc] : acc;
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv_backward_direct(const Tensor<T>& input, const Tensor<T>& weights,
                                  const ConvSpec& spec, const Tensor<T>& grad_output,
                                  bool with_bias) {
  const ConvGeometry g = detail::make_geometry(input.dims(), weights.dims(), spec);
  if (grad_output.dims() != spec.output_dims(input.dims())) {
    throw ShapeError("conv_backward: grad_output shape mismatch");
  }
  ConvGrads<T> grads{Tensor<T>(input.dims()), Tensor<T>(weights.dims()), Tensor<T>()};
  if (with_bias) grads.bias = Tensor<T>(Dims{g.out_c});
  const std::int64_t cg = g.in_group();
  const std::int64_t og = g.out_group();

  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t oc = 0; oc < g.out_c; ++oc) {
      const std::int64_t grp = oc / og;
      for (std::int64_t od = 0; od < g.out_d; ++od) {
        for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
          for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
            const T go =
                grad_output[(((n * g.out_c + oc) * g.out_d + od) * g.out_h + oh) * g.out_w + ow];
            if (with_bias) grads.bias[oc] += go;
            for (std::int64_t ic = 0; ic < cg; ++ic) {
              const std::int64_t c = grp * cg + ic;
              for (int a = 0; a < g.kd; ++a) {
                const std::int64_t id = od * g.sd - g.pd + a * g.dd;
                for (int b = 0; b < g.kh; ++b) {
                  const std::int64_t ih = oh * g.sh - g.ph + b * g.dh;
                  for (int e = 0; e < g.kw; ++e) {
                    const std::int64_t iw = ow * g.sw - g.pw + e * g.dw;
                    if (id < 0 || id >= g.in_d || ih < 0 || ih >= g.in_h || iw < 0 ||
                        iw >= g.in_w) {
                      continue;
                    }
                    const std::int64_t xi =
                        (((n * g.in_c + c) * g.in_d + id) * g.in_h + ih) * g.in_w + iw;
                    const std::int64_t wi = (((oc * cg + ic) * g.kd + a) * g.kh + b) * g.kw + e;
                    grads.input[xi] += go * weights[wi];
                    grads.weights[wi] += go * input[xi];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return grads;
}

template Tensor<float> conv_forward_direct<float>(const Tensor<float>&, const Tensor<float>&,
                                                  const Tensor<float>*, const ConvSpec&);
template Tensor<double> conv_forward_direct<double>(const Tensor<double>&, const Tensor<double>&,
                                                    const Tensor<double>*, const ConvSpec&);
template ConvGrads<float> conv_backward_direct<float>(const Tensor<float>&, const Tensor<float>&,
                                                      const ConvSpec&, const Tensor<float>&, bool);
template ConvGrads<double> conv_backward_direct<double>(const Tensor<double>&,
                                                        const Tensor<double>&, const ConvSpec&,
                                                        const Tensor<double>&, bool);

}  // namespace pyconv::reference
