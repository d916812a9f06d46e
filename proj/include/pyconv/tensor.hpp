#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pyconv {

using Dims = std::vector<std::int64_t>;

/// Raised for any extent, rank or divisibility mismatch.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::int64_t product(const Dims& dims);
std::string to_string(const Dims& dims);

/// Dense row-major array. The last dimension is fastest; for feature maps the
/// layout is NCHW (2D) or NCTHW (video), so axis 1 is always the channel axis.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  /// Zero-filled tensor. Throws ShapeError for an empty dims list or an
  /// extent below 1.
  explicit Tensor(Dims dims);
  Tensor(Dims dims, std::vector<T> data);

  const Dims& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  std::int64_t dim(int axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Bounds-checked multi-index access.
  T& at(std::initializer_list<std::int64_t> index);
  const T& at(std::initializer_list<std::int64_t> index) const;
  std::int64_t flat_index(std::initializer_list<std::int64_t> index) const;

  /// Channel extent (axis 1); requires rank >= 2.
  std::int64_t channels() const;
  /// Product of the extents after the channel axis.
  std::int64_t spatial_size() const;
  Dims spatial_dims() const;

  void fill(T value);
  Tensor reshaped(Dims dims) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(dims_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T> zeros(Dims dims) {
  return Tensor<T>(std::move(dims));
}

/// Normal(0, sqrt(2 / fan_in)) samples. Each element is a pure function of
/// (seed, flat index), so the result does not depend on evaluation order.
template <typename T>
Tensor<T> he_normal_init(Dims dims, std::int64_t fan_in, std::uint64_t seed);

/// Normal(0, stddev) samples, a pure function of (seed, flat index).
template <typename T>
Tensor<T> random_normal(Dims dims, std::uint64_t seed, double stddev = 1.0);

/// Uniform samples in (lo, hi), a pure function of (seed, flat index).
template <typename T>
Tensor<T> random_uniform(Dims dims, std::uint64_t seed, double lo = 0.0, double hi = 1.0);

/// Concatenate along axis 1. All other extents must agree.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> tensors);

/// Copy of channels [start, start + count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, std::int64_t start, std::int64_t count);

/// Add `src` into channels [start, start + src.channels()) of `dst`.
template <typename T>
void accumulate_channels(Tensor<T>& dst, const Tensor<T>& src, std::int64_t start);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace pyconv
