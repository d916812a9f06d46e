#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pyconv/config.hpp"
#include "pyconv/graph.hpp"

namespace pyconv {

struct TrainConfig {
  double base_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<int> milestones{30, 60, 80};
  double decay = 0.1;
  int epochs = 30;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double aux_weight = 0.4;

  /// Throws std::invalid_argument on non-increasing milestones, a
  /// non-positive learning rate, decay factor or batch size, or a negative
  /// momentum, weight decay or epoch count.
  void validate() const;
};

/// base_lr * decay^(number of milestones <= epoch); epoch 30 is already decayed.
double lr_at(int epoch, const TrainConfig& config);

/// g' = g + wd p; v = momentum v + g'; p -= lr v, for every tensor including
/// BN scale and shift. `velocity` is zero-initialized when empty.
template <typename T>
void sgd_step(ParamStore<T>& params, const ParamStore<T>& grads, ParamStore<T>& velocity, double lr,
              const TrainConfig& config);

/// Mean cross-entropy over rows ([N, K] logits) or pixels ([N, K, H, W]
/// logits with N*H*W labels). Gradient matches the logits' layout.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

template <typename T>
struct CombinedLoss {
  double loss = 0.0;
  double main_loss = 0.0;
  double aux_loss = 0.0;
  Tensor<T> grad_main;
  Tensor<T> grad_aux;
};

/// L = L_main + aux_weight * L_aux.
template <typename T>
CombinedLoss<T> combined_loss(const Tensor<T>& main_logits, const Tensor<T>& aux_logits,
                              const std::vector<int>& labels, double aux_weight);

struct ToyDataset {
  Tensor<float> images;  // [N, 3, size, size]
  std::vector<int> labels;
  int classes = 0;
};

/// Class k is a sinusoidal grating at angle k*pi/classes with 2 + (k % 3)
/// cycles per image, random phase, plus N(0, 0.3^2) pixel noise. Sample i
/// has label i % classes.
ToyDataset make_toy_dataset(std::uint64_t seed, int n_per_class = 32, int classes = 10, int size = 32);

/// Width /8 PyConvResNet-50 for the toy dataset.
ModelConfig toy_model_config(int classes = 10, int size = 32);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  /// Fraction of training samples classified correctly by the train-mode
  /// forward passes of the epoch.
  double accuracy = 0.0;
};

std::string history_csv(const std::vector<EpochRecord>& history);

/// Everything needed to continue training bit-exactly.
struct TrainState {
  ParamStore<float> params;
  ParamStore<float> buffers;
  ParamStore<float> velocity;
  int epoch = 0;
};

TrainState init_train_state(const NetworkGraph& net, std::uint64_t seed);

/// Runs epochs [state.epoch, config.epochs) of mini-batch SGD on the
/// graph's "logits" output. Batches follow a per-epoch seeded shuffle; a
/// trailing batch of one sample is dropped (batch statistics need two).
std::vector<EpochRecord> train_toy(const NetworkGraph& net, const ToyDataset& data, const TrainConfig& config,
                                   TrainState& state,
                                   const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Eval-mode predictions (running statistics), one class id per sample.
std::vector<int> predict(const NetworkGraph& net, const ParamStore<float>& params, ParamStore<float>& buffers,
                         const Tensor<float>& images, int batch_size = 32);

}  // namespace pyconv
