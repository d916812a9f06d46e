#pragma once

#include <cstdint>

#include "pyconv/nnops.hpp"

namespace pyconv::detail {

// Both 2D and 3D convolutions run on a (D, H, W) view; 2D maps to D = 1.
struct ConvGeometry {
  std::int64_t batch = 0;
  std::int64_t in_c = 0, in_d = 1, in_h = 1, in_w = 1;
  std::int64_t out_c = 0, out_d = 1, out_h = 1, out_w = 1;
  int kd = 1, kh = 1, kw = 1;
  int sd = 1, sh = 1, sw = 1;
  int pd = 0, ph = 0, pw = 0;
  int dd = 1, dh = 1, dw = 1;
  std::int64_t groups = 1;

  std::int64_t in_group() const { return in_c / groups; }
  std::int64_t out_group() const { return out_c / groups; }
  std::int64_t in_plane() const { return in_d * in_h * in_w; }
  std::int64_t out_plane() const { return out_d * out_h * out_w; }
  std::int64_t kernel_volume() const { return static_cast<std::int64_t>(kd) * kh * kw; }
  /// Column length of one output pixel: (FM_i / G) * kernel volume.
  std::int64_t patch() const { return in_group() * kernel_volume(); }
  bool pointwise() const {
    return kd == 1 && kh == 1 && kw == 1 && sd == 1 && sh == 1 && sw == 1 && pd == 0 && ph == 0 &&
           pw == 0;
  }
};

ConvGeometry make_geometry(const Dims& input_dims, const Dims& weight_dims, const ConvSpec& spec);

}  // namespace pyconv::detail
