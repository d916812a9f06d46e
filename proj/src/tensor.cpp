#include "pyconv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pyconv/rng.hpp"

namespace pyconv {

namespace {

void check_dims(const Dims& dims) {
  if (dims.empty()) throw ShapeError("tensor dims must be non-empty");
  for (auto d : dims) {
    if (d < 1) throw ShapeError("tensor extent must be >= 1, got " + to_string(dims));
  }
}

}  // namespace

std::int64_t product(const Dims& dims) {
  std::int64_t p = 1;
  for (auto d : dims) p *= d;
  return p;
}

std::string to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Dims dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(static_cast<std::size_t>(product(dims_)), T(0));
}

template <typename T>
Tensor<T>::Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (static_cast<std::int64_t>(data_.size()) != product(dims_)) {
    throw ShapeError("buffer length " + std::to_string(data_.size()) + " does not match dims " +
                     to_string(dims_));
  }
}

template <typename T>
std::int64_t Tensor<T>::flat_index(std::initializer_list<std::int64_t> index) const {
  if (static_cast<int>(index.size()) != rank()) throw ShapeError("index rank mismatch");
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= dims_[axis]) throw ShapeError("index out of range");
    flat = flat * dims_[axis] + i;
    ++axis;
  }
  return flat;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::int64_t> index) {
  return data_[static_cast<std::size_t>(flat_index(index))];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  return data_[static_cast<std::size_t>(flat_index(index))];
}

template <typename T>
std::int64_t Tensor<T>::channels() const {
  if (rank() < 2) throw ShapeError("channel axis requires rank >= 2");
  return dims_[1];
}

template <typename T>
std::int64_t Tensor<T>::spatial_size() const {
  std::int64_t p = 1;
  for (std::size_t i = 2; i < dims_.size(); ++i) p *= dims_[i];
  return p;
}

template <typename T>
Dims Tensor<T>::spatial_dims() const {
  return rank() > 2 ? Dims(dims_.begin() + 2, dims_.end()) : Dims{};
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Dims dims) const {
  return Tensor<T>(std::move(dims), data_);
}

template <typename T>
Tensor<T> random_normal(Dims dims, std::uint64_t seed, double stddev) {
  Tensor<T> t(std::move(dims));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<T>(stddev * rng::normal(seed, static_cast<std::uint64_t>(i)));
  }
  return t;
}

template <typename T>
Tensor<T> random_uniform(Dims dims, std::uint64_t seed, double lo, double hi) {
  Tensor<T> t(std::move(dims));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<T>(lo + (hi - lo) * rng::uniform(seed, static_cast<std::uint64_t>(i)));
  }
  return t;
}

template <typename T>
Tensor<T> he_normal_init(Dims dims, std::int64_t fan_in, std::uint64_t seed) {
  if (fan_in <= 0) throw std::invalid_argument("he_normal_init: fan_in must be positive");
  Tensor<T> t(std::move(dims));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  const std::int64_t n = t.size();
  T* out = t.raw();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[i] = static_cast<T>(stddev * rng::normal(seed, static_cast<std::uint64_t>(i)));
  }
  return t;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> tensors) {
  if (tensors.empty()) throw ShapeError("concat_channels: no inputs");
  const Dims& ref = tensors[0].dims();
  if (ref.size() < 2) throw ShapeError("concat_channels: rank must be >= 2");
  std::int64_t total = 0;
  for (const auto& t : tensors) {
    const Dims& d = t.dims();
    bool ok = d.size() == ref.size();
    for (std::size_t i = 0; ok && i < d.size(); ++i) {
      if (i != 1 && d[i] != ref[i]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat_channels: " + to_string(d) + " incompatible with " + to_string(ref));
    }
    total += d[1];
  }
  Dims out_dims = ref;
  out_dims[1] = total;
  Tensor<T> out(out_dims);
  const std::int64_t batch = ref[0];
  const std::int64_t plane = tensors[0].spatial_size();
  std::int64_t offset = 0;
  for (const auto& t : tensors) {
    const std::int64_t c = t.dims()[1];
    for (std::int64_t n = 0; n < batch; ++n) {
      const T* src = t.raw() + n * c * plane;
      T* dst = out.raw() + (n * total + offset) * plane;
      std::copy(src, src + c * plane, dst);
    }
    offset += c;
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, std::int64_t start, std::int64_t count) {
  const std::int64_t c = t.channels();
  if (start < 0 || count < 1 || start + count > c) {
    throw ShapeError("slice_channels: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + std::to_string(c) + " channels");
  }
  Dims out_dims = t.dims();
  out_dims[1] = count;
  Tensor<T> out(out_dims);
  const std::int64_t plane = t.spatial_size();
  for (std::int64_t n = 0; n < t.dim(0); ++n) {
    const T* src = t.raw() + (n * c + start) * plane;
    std::copy(src, src + count * plane, out.raw() + n * count * plane);
  }
  return out;
}

template <typename T>
void accumulate_channels(Tensor<T>& dst, const Tensor<T>& src, std::int64_t start) {
  const std::int64_t c = dst.channels();
  const std::int64_t count = src.channels();
  if (start < 0 || start + count > c || src.dim(0) != dst.dim(0) ||
      src.spatial_size() != dst.spatial_size()) {
    throw ShapeError("accumulate_channels: incompatible shapes");
  }
  const std::int64_t plane = dst.spatial_size();
  for (std::int64_t n = 0; n < dst.dim(0); ++n) {
    const T* s = src.raw() + n * count * plane;
    T* d = dst.raw() + (n * c + start) * plane;
    for (std::int64_t i = 0; i < count * plane; ++i) d[i] += s[i];
  }
}

template class Tensor<float>;
template class Tensor<double>;

#define PYCONV_INSTANTIATE(T)                                                          \
  template Tensor<T> he_normal_init<T>(Dims, std::int64_t, std::uint64_t);             \
  template Tensor<T> random_normal<T>(Dims, std::uint64_t, double);                    \
  template Tensor<T> random_uniform<T>(Dims, std::uint64_t, double, double);           \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                   \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::int64_t, std::int64_t); \
  template void accumulate_channels<T>(Tensor<T>&, const Tensor<T>&, std::int64_t);

PYCONV_INSTANTIATE(float)
PYCONV_INSTANTIATE(double)

}  // namespace pyconv
