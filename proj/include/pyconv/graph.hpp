#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pyconv/nnops.hpp"
#include "pyconv/pyconv.hpp"

namespace pyconv {

enum class NodeKind {
  input,
  conv,
  pyconv,
  batchnorm,
  relu,
  maxpool,
  adaptive_avgpool,
  global_avgpool,
  upsample,
  linear,
  add,
  concat,
  dropout,
};

std::string_view kind_name(NodeKind kind);

struct ConvNode {
  ConvSpec conv;
  bool bias = false;
  bool operator==(const ConvNode&) const = default;
};

struct BatchNormNode {
  std::int64_t channels = 0;
  bool operator==(const BatchNormNode&) const = default;
};

/// Pools the larger spatial axis to `max_side` and the smaller one
/// proportionally (rounded, at least 1). Targets are clamped to the input
/// extent so reduced-size inputs stay valid.
struct AdaptivePoolNode {
  int max_side = 1;
  bool operator==(const AdaptivePoolNode&) const = default;
};

struct LinearNode {
  std::int64_t in_features = 0;
  std::int64_t out_features = 0;
  bool operator==(const LinearNode&) const = default;
};

struct DropoutNode {
  double p = 0.0;
  bool operator==(const DropoutNode&) const = default;
};

using NodeSpec = std::variant<std::monostate, ConvNode, PyConvSpec, BatchNormNode, PoolSpec,
                              AdaptivePoolNode, LinearNode, DropoutNode>;

struct LayerNode {
  int id = 0;
  std::string name;
  NodeKind kind = NodeKind::input;
  NodeSpec spec;
  /// Upsample takes (source, size reference); add takes two operands.
  std::vector<int> inputs;
  std::vector<std::string> params;
  std::vector<std::string> buffers;
};

enum class ParamRole { weight, bias, gamma, beta, running_mean, running_var };

struct TensorInfo {
  std::string name;
  Dims dims;
  ParamRole role = ParamRole::weight;
  /// He-init fan-in for weights; 0 for everything else.
  std::int64_t fan_in = 0;
  int node = -1;
};

/// Human-readable stage summary used by `describe`.
struct StageInfo {
  std::string name;
  int output_node = -1;
  std::vector<std::string> rows;
  int repeat = 1;
};

/// Ordered DAG of layers. Nodes can only consume earlier nodes, so insertion
/// order is a valid execution order. Node 0 is the single image input.
class NetworkGraph {
 public:
  NetworkGraph(std::string name, std::int64_t in_channels, int spatial_rank);

  const std::string& name() const { return name_; }
  std::int64_t in_channels() const { return in_channels_; }
  int spatial_rank() const { return spatial_rank_; }
  int input() const { return 0; }

  int add_conv(const std::string& name, const ConvSpec& spec, int input, bool bias = false);
  int add_pyconv(const std::string& name, const PyConvSpec& spec, int input);
  int add_batchnorm(const std::string& name, std::int64_t channels, int input);
  int add_relu(const std::string& name, int input);
  int add_maxpool(const std::string& name, const PoolSpec& spec, int input);
  int add_adaptive_avgpool(const std::string& name, int max_side, int input);
  int add_global_avgpool(const std::string& name, int input);
  int add_upsample(const std::string& name, int input, int size_reference);
  int add_linear(const std::string& name, std::int64_t in_features, std::int64_t out_features,
                 int input);
  int add_add(const std::string& name, int a, int b);
  int add_concat(const std::string& name, const std::vector<int>& inputs);
  int add_dropout(const std::string& name, double p, int input);

  void set_output(const std::string& name, int node);
  void add_stage(StageInfo stage) { stages_.push_back(std::move(stage)); }

  const std::vector<LayerNode>& nodes() const { return nodes_; }
  const LayerNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  int find(const std::string& node_name) const;
  const std::vector<TensorInfo>& params() const { return params_; }
  const std::vector<TensorInfo>& buffers() const { return buffers_; }
  const std::vector<std::pair<std::string, int>>& outputs() const { return outputs_; }
  const std::vector<StageInfo>& stages() const { return stages_; }

  /// Output dims of every node for a given input; throws ShapeError with the
  /// offending node name on any mismatch.
  std::vector<Dims> infer_shapes(const Dims& input_dims) const;

  /// Learnable scalar count allocated by the builder.
  std::int64_t param_count() const;
  std::vector<const PyConvSpec*> pyconv_specs() const;

 private:
  int push(const std::string& name, NodeKind kind, NodeSpec spec, std::vector<int> inputs);
  void add_param(LayerNode& n, const std::string& suffix, Dims dims, ParamRole role,
                 std::int64_t fan_in);
  void add_buffer(LayerNode& n, const std::string& suffix, Dims dims, ParamRole role);

  std::string name_;
  std::int64_t in_channels_;
  int spatial_rank_;
  std::vector<LayerNode> nodes_;
  std::unordered_map<std::string, int> by_name_;
  std::vector<TensorInfo> params_;
  std::vector<TensorInfo> buffers_;
  std::vector<std::pair<std::string, int>> outputs_;
  std::vector<StageInfo> stages_;
};

/// Spatial target of an adaptive pool node for a given input.
Dims adaptive_pool_target(const Dims& in_spatial, int max_side);

/// Ordered, name-addressable set of tensors (parameters, buffers or grads).
template <typename T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> t);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T>& get(const std::string& name);
  const Tensor<T>& get(const std::string& name) const;
  std::size_t size() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  std::int64_t element_count() const;
  /// Same names and dims, all zeros.
  ParamStore zeros_like() const;

  bool operator==(const ParamStore& other) const {
    return names_ == other.names_ && tensors_ == other.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr double kClassifierInitStd = 0.01;

/// Conv weights ~ He normal and linear weights ~ N(0, 0.01^2), each seeded
/// per tensor; biases and beta 0, gamma 1.
template <typename T>
ParamStore<T> init_params(const NetworkGraph& g, std::uint64_t seed);

/// Running mean 0, running variance 1.
template <typename T>
ParamStore<T> init_buffers(const NetworkGraph& g);

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace pyconv
