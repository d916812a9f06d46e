#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pyconv/graph.hpp"

namespace pyconv {

struct RunOptions {
  /// Batch statistics and active dropout when true.
  bool training = false;
  std::uint64_t seed = 0;
  /// Keep every activation for a later backward pass. When false each
  /// intermediate is released after its last consumer runs.
  bool keep_activations = true;
};

/// Runs a NetworkGraph in insertion order over caller-owned parameters and
/// buffers. Training-mode forwards update running statistics in `buffers`.
template <typename T>
class Executor {
 public:
  Executor(const NetworkGraph& graph, const ParamStore<T>& params, ParamStore<T>& buffers);

  std::map<std::string, Tensor<T>> forward(const Tensor<T>& input, const RunOptions& options = {});

  /// Re-runs nodes [first, end) of the last kept forward with the same
  /// options, reusing earlier activations. Equals a full forward whenever
  /// nothing upstream of `first` changed.
  std::map<std::string, Tensor<T>> forward_from(int first, const Tensor<T>& input);

  /// Gradients for every parameter, given a gradient for some or all named
  /// outputs of the last forward. Requires keep_activations.
  ParamStore<T> backward(const std::map<std::string, Tensor<T>>& output_grads);

  /// Gradient with respect to the network input from the last backward.
  const Tensor<T>& input_grad() const { return input_grad_; }
  const Tensor<T>& activation(int node) const;

  /// Pins every ReLU mask and max-pool selection to those of the last
  /// forward. Later forwards evaluate the smooth piece of the network that
  /// contains that forward, which is the function backward differentiates.
  void freeze_kinks();
  void unfreeze_kinks();

  /// ReLU activation pattern and max-pool selections of the last forward.
  /// Equal signatures mean the network is locally the same smooth function.
  std::vector<std::int64_t> kink_signature() const;

 private:
  struct NodeCache {
    BatchNormCache<T> bn;
    std::vector<std::int64_t> argmax;
    std::uint64_t dropout_seed = 0;
  };

  void run_nodes(int first, const Tensor<T>& input);
  std::map<std::string, Tensor<T>> collect_outputs() const;

  const NetworkGraph& graph_;
  const ParamStore<T>& params_;
  ParamStore<T>& buffers_;
  std::vector<Dims> shapes_;
  std::vector<Tensor<T>> acts_;
  std::vector<NodeCache> cache_;
  Tensor<T> input_grad_;
  RunOptions last_;
  bool have_forward_ = false;
  bool frozen_ = false;
  std::vector<std::vector<char>> relu_masks_;
  std::vector<std::vector<std::int64_t>> frozen_argmax_;
};

extern template class Executor<float>;
extern template class Executor<double>;

}  // namespace pyconv
