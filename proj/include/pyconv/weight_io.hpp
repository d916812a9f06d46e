#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "pyconv/graph.hpp"
#include "pyconv/train.hpp"

namespace pyconv {

/// Malformed or truncated weight data; `offset` is the byte position where
/// decoding failed.
class WeightFormatError : public std::runtime_error {
 public:
  WeightFormatError(const std::string& what, std::uint64_t offset);
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

/// Little-endian container: "PYCV", u32 version 1, u32 count, then per
/// tensor u32 name length, name, u8 dtype, u8 rank, u64 extents, raw data.
struct WeightFile {
  std::vector<std::pair<std::string, AnyTensor>> tensors;

  const AnyTensor* find(const std::string& name) const;
  template <typename T>
  void add(const std::string& name, Tensor<T> t) {
    tensors.emplace_back(name, AnyTensor(std::move(t)));
  }
  /// Every tensor of `store`, each name prefixed with `prefix`.
  template <typename T>
  void add_all(const ParamStore<T>& store, const std::string& prefix = "");
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::string encode_weights(const WeightFile& file);
WeightFile decode_weights(std::string_view bytes);
void save_weight_file(const std::string& path, const WeightFile& file);
WeightFile load_weight_file(const std::string& path);

/// Overwrites each tensor of `store` with the entry named prefix + name,
/// converting dtype when needed. Throws std::invalid_argument for a missing
/// entry or a shape mismatch.
template <typename T>
void load_into(const WeightFile& file, ParamStore<T>& store, const std::string& prefix = "");

/// Tensor converted to T.
template <typename T>
Tensor<T> as_tensor(const AnyTensor& t);

/// Parameters and buffers under their graph names, momentum buffers under
/// "velocity/", and the next epoch as the f64 scalar "train/epoch". The
/// result is also a plain weight file for the network.
WeightFile train_state_file(const TrainState& state);
TrainState train_state_from_file(const WeightFile& file, const NetworkGraph& net);

}  // namespace pyconv
