#include "pyconv/pyconv.hpp"

#include <numeric>

namespace pyconv {

int PyConvLevel::spatial_kernel() const {
  if (kernel.size() < 2) throw ShapeError("pyconv: level kernel needs 2 or 3 axes");
  return kernel[kernel.size() - 2];
}

std::int64_t PyConvSpec::out_channels() const {
  std::int64_t total = 0;
  for (const auto& l : levels) total += l.out_channels;
  return total;
}

ConvSpec PyConvSpec::level_conv(std::size_t n) const {
  const PyConvLevel& l = levels.at(n);
  ConvSpec c;
  c.kernel = l.kernel;
  c.stride = stride;
  c.dilation.assign(l.kernel.size(), l.dilation);
  c.padding.resize(l.kernel.size());
  for (std::size_t i = 0; i < l.kernel.size(); ++i) c.padding[i] = (l.kernel[i] - 1) / 2 * l.dilation;
  c.groups = l.groups;
  c.in_channels = in_channels;
  c.out_channels = l.out_channels;
  return c;
}

Dims PyConvSpec::output_dims(const Dims& input_dims) const {
  require_valid(*this);
  Dims out = level_conv(0).output_dims(input_dims);
  out[1] = out_channels();
  return out;
}

std::vector<std::int64_t> PyConvSpec::channel_offsets() const {
  std::vector<std::int64_t> off{0};
  for (const auto& l : levels) off.push_back(off.back() + l.out_channels);
  return off;
}

std::vector<std::string> validate(const PyConvSpec& spec) {
  std::vector<std::string> v;
  if (spec.in_channels < 1) v.push_back("in-channels must be positive");
  if (spec.levels.empty()) v.push_back("at least one level is required");
  const std::size_t rank = spec.stride.size();
  if (rank != 2 && rank != 3) v.push_back("stride must have 2 or 3 axes");
  for (int s : spec.stride) {
    if (s < 1) {
      v.push_back("stride must be positive");
      break;
    }
  }
  int prev_k = 0;
  for (std::size_t n = 0; n < spec.levels.size(); ++n) {
    const PyConvLevel& l = spec.levels[n];
    const std::string at = "level " + std::to_string(n + 1) + ": ";
    if (l.kernel.size() != rank) {
      v.push_back(at + "kernel axis count differs from stride");
      continue;
    }
    bool positive = l.out_channels >= 1 && l.groups >= 1 && l.dilation >= 1;
    for (int k : l.kernel) positive = positive && k >= 1;
    if (!positive) {
      v.push_back(at + "kernel, out-channels, groups and dilation must be positive");
      continue;
    }
    for (int k : l.kernel) {
      if (k % 2 == 0) {
        v.push_back(at + "kernel sizes must be odd");
        break;
      }
    }
    if (spec.in_channels >= 1 && spec.in_channels % l.groups != 0) {
      v.push_back(at + "groups must divide in-channels");
    }
    if (l.out_channels % l.groups != 0) v.push_back(at + "groups must divide level out-channels");
    if (l.spatial_kernel() <= prev_k) v.push_back(at + "kernel sizes must increase strictly");
    prev_k = l.spatial_kernel();
  }
  return v;
}

void require_valid(const PyConvSpec& spec) {
  const auto v = validate(spec);
  if (v.empty()) return;
  std::string msg = "invalid pyconv spec:";
  for (const auto& s : v) msg += " [" + s + "]";
  throw ShapeError(msg);
}

std::vector<std::int64_t> default_group_schedule(std::int64_t in_channels,
                                                 const std::vector<int>& kernel_sizes) {
  if (in_channels < 1) throw std::invalid_argument("group schedule: FM_i must be >= 1");
  if (kernel_sizes.empty()) return {};
  const double k1 = kernel_sizes.front();
  std::vector<std::int64_t> groups;
  groups.reserve(kernel_sizes.size());
  for (int k : kernel_sizes) {
    const double ratio = (static_cast<double>(k) * k) / (k1 * k1);
    std::int64_t g = 1;
    while (static_cast<double>(g) < ratio && in_channels % (g * 2) == 0) g *= 2;
    groups.push_back(g);
  }
  return groups;
}

PyConvSpec make_pyconv2d(std::int64_t in_channels, std::int64_t out_channels,
                         const std::vector<int>& kernel_sizes, int stride,
                         std::optional<std::vector<std::int64_t>> splits,
                         std::optional<std::vector<std::int64_t>> groups, int dilation) {
  const std::size_t n = kernel_sizes.size();
  if (n == 0) throw ShapeError("pyconv: no kernel sizes");
  if (!splits) {
    if (out_channels % static_cast<std::int64_t>(n) != 0) {
      throw ShapeError("pyconv: " + std::to_string(out_channels) + " channels do not split evenly over " +
                       std::to_string(n) + " levels");
    }
    splits = std::vector<std::int64_t>(n, out_channels / static_cast<std::int64_t>(n));
  }
  if (!groups) groups = default_group_schedule(in_channels, kernel_sizes);
  if (splits->size() != n || groups->size() != n) {
    throw ShapeError("pyconv: splits/groups length differs from level count");
  }
  PyConvSpec s;
  s.in_channels = in_channels;
  s.stride = {stride, stride};
  for (std::size_t i = 0; i < n; ++i) {
    s.levels.push_back({{kernel_sizes[i], kernel_sizes[i]}, (*splits)[i], (*groups)[i], dilation});
  }
  if (s.out_channels() != out_channels) throw ShapeError("pyconv: splits do not sum to out-channels");
  return s;
}

namespace {

template <typename T>
void check_weights(const PyConvSpec& spec, std::span<const Tensor<T>> w) {
  require_valid(spec);
  if (w.size() != spec.levels.size()) {
    throw ShapeError("pyconv: expected " + std::to_string(spec.levels.size()) + " weight tensors, got " +
                     std::to_string(w.size()));
  }
  for (std::size_t n = 0; n < w.size(); ++n) {
    const Dims want = spec.level_conv(n).weight_dims();
    if (w[n].dims() != want) {
      throw ShapeError("pyconv: level " + std::to_string(n + 1) + " weights " + to_string(w[n].dims()) +
                       ", expected " + to_string(want));
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> pyconv_forward(const Tensor<T>& input, const PyConvSpec& spec,
                         std::span<const Tensor<T>> level_weights) {
  check_weights(spec, level_weights);
  std::vector<Tensor<T>> outs;
  outs.reserve(spec.levels.size());
  for (std::size_t n = 0; n < spec.levels.size(); ++n) {
    outs.push_back(conv_forward<T>(input, level_weights[n], nullptr, spec.level_conv(n)));
  }
  if (outs.size() == 1) return std::move(outs.front());
  return concat_channels<T>(outs);
}

template <typename T>
PyConvGrads<T> pyconv_backward(const Tensor<T>& input, const PyConvSpec& spec,
                               std::span<const Tensor<T>> level_weights,
                               const Tensor<T>& grad_output) {
  check_weights(spec, level_weights);
  if (grad_output.dims() != spec.output_dims(input.dims())) {
    throw ShapeError("pyconv_backward: grad_output " + to_string(grad_output.dims()) + " mismatch");
  }
  const auto off = spec.channel_offsets();
  PyConvGrads<T> g{Tensor<T>(input.dims()), {}};
  for (std::size_t n = 0; n < spec.levels.size(); ++n) {
    const Tensor<T> go =
        spec.levels.size() == 1 ? grad_output : slice_channels(grad_output, off[n], off[n + 1] - off[n]);
    ConvGrads<T> cg = conv_backward<T>(input, level_weights[n], spec.level_conv(n), go);
    if (n == 0) {
      g.input = std::move(cg.input);
    } else {
      auto dst = g.input.data();
      const auto src = cg.input.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    g.weights.push_back(std::move(cg.weights));
  }
  return g;
}

Cost pyconv_cost(const PyConvSpec& spec, const Dims& out_spatial) {
  require_valid(spec);
  const std::int64_t volume = product(out_spatial);
  Cost c;
  for (std::size_t n = 0; n < spec.levels.size(); ++n) c.params += spec.level_conv(n).weight_count();
  c.flops = c.params * volume;
  return c;
}

template Tensor<float> pyconv_forward<float>(const Tensor<float>&, const PyConvSpec&,
                                             std::span<const Tensor<float>>);
template Tensor<double> pyconv_forward<double>(const Tensor<double>&, const PyConvSpec&,
                                               std::span<const Tensor<double>>);
template PyConvGrads<float> pyconv_backward<float>(const Tensor<float>&, const PyConvSpec&,
                                                   std::span<const Tensor<float>>,
                                                   const Tensor<float>&);
template PyConvGrads<double> pyconv_backward<double>(const Tensor<double>&, const PyConvSpec&,
                                                     std::span<const Tensor<double>>,
                                                     const Tensor<double>&);

}  // namespace pyconv
