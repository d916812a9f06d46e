#include "pyconv/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "pyconv/executor.hpp"
#include "pyconv/nnops.hpp"
#include "pyconv/rng.hpp"

namespace pyconv {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("train: base_lr must be positive");
  if (!(decay > 0.0)) throw std::invalid_argument("train: decay must be positive");
  if (!(momentum >= 0.0)) throw std::invalid_argument("train: momentum must be non-negative");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be non-negative");
  if (!(aux_weight >= 0.0)) throw std::invalid_argument("train: aux_weight must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] < 0) throw std::invalid_argument("train: milestones must be non-negative");
    if (i > 0 && milestones[i] <= milestones[i - 1]) {
      throw std::invalid_argument("train: milestones must be strictly increasing");
    }
  }
}

double lr_at(int epoch, const TrainConfig& config) {
  double lr = config.base_lr;
  for (int m : config.milestones) {
    if (epoch >= m) lr *= config.decay;
  }
  return lr;
}

template <typename T>
void sgd_step(ParamStore<T>& params, const ParamStore<T>& grads, ParamStore<T>& velocity, double lr,
              const TrainConfig& config) {
  if (velocity.size() == 0) velocity = params.zeros_like();
  if (grads.names() != params.names() || velocity.names() != params.names()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity names differ");
  }
  const T m = static_cast<T>(config.momentum);
  const T wd = static_cast<T>(config.weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = params.tensors()[i];
    const Tensor<T>& g = grads.tensors()[i];
    Tensor<T>& v = velocity.tensors()[i];
    if (g.dims() != p.dims() || v.dims() != p.dims()) {
      throw ShapeError("sgd_step: shape mismatch for " + params.names()[i]);
    }
    const std::int64_t n = p.size();
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < n; ++j) {
      v[j] = m * v[j] + (g[j] + wd * p[j]);
      p[j] -= rate * v[j];
    }
  }
}

template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() == 2) return softmax_cross_entropy(logits, labels);
  if (logits.rank() < 2) throw ShapeError("cross_entropy: logits must have rank >= 2");
  const std::int64_t n = logits.dim(0), k = logits.dim(1), hw = logits.spatial_size();
  Tensor<T> rows({n * hw, k});
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t c = 0; c < k; ++c) {
      const T* src = logits.raw() + (b * k + c) * hw;
      for (std::int64_t p = 0; p < hw; ++p) rows[(b * hw + p) * k + c] = src[p];
    }
  }
  LossResult<T> flat = softmax_cross_entropy(rows, labels);
  LossResult<T> r{flat.loss, Tensor<T>(logits.dims())};
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t c = 0; c < k; ++c) {
      T* dst = r.grad.raw() + (b * k + c) * hw;
      for (std::int64_t p = 0; p < hw; ++p) dst[p] = flat.grad[(b * hw + p) * k + c];
    }
  }
  return r;
}

template <typename T>
CombinedLoss<T> combined_loss(const Tensor<T>& main_logits, const Tensor<T>& aux_logits,
                              const std::vector<int>& labels, double aux_weight) {
  LossResult<T> main = cross_entropy(main_logits, labels);
  LossResult<T> aux = cross_entropy(aux_logits, labels);
  const T w = static_cast<T>(aux_weight);
  for (std::int64_t i = 0; i < aux.grad.size(); ++i) aux.grad[i] *= w;
  return {main.loss + aux_weight * aux.loss, main.loss, aux.loss, std::move(main.grad), std::move(aux.grad)};
}

ToyDataset make_toy_dataset(std::uint64_t seed, int n_per_class, int classes, int size) {
  if (n_per_class < 1 || classes < 2 || size < 8) {
    throw std::invalid_argument("make_toy_dataset: need n_per_class >= 1, classes >= 2, size >= 8");
  }
  const std::int64_t n = static_cast<std::int64_t>(n_per_class) * classes;
  const std::int64_t plane = static_cast<std::int64_t>(size) * size;
  ToyDataset d{Tensor<float>({n, 3, size, size}), std::vector<int>(static_cast<std::size_t>(n)), classes};
  const std::uint64_t phase_seed = rng::mix(seed, 1);
  const std::uint64_t noise_seed = rng::mix(seed, 2);
  for (std::int64_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % classes);
    d.labels[static_cast<std::size_t>(i)] = k;
    const double angle = std::numbers::pi * k / classes;
    const double cycles = 2.0 + k % 3;
    const double fx = std::cos(angle) * cycles / size, fy = std::sin(angle) * cycles / size;
    const double phase = 2.0 * std::numbers::pi * rng::uniform(phase_seed, static_cast<std::uint64_t>(i));
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double v = std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
        for (int c = 0; c < 3; ++c) {
          const std::int64_t idx = (i * 3 + c) * plane + y * size + x;
          d.images[idx] = static_cast<float>(v + 0.3 * rng::normal(noise_seed, static_cast<std::uint64_t>(idx)));
        }
      }
    }
  }
  return d;
}

ModelConfig toy_model_config(int classes, int size) {
  ModelConfig c;
  c.family = Family::pyconvresnet;
  c.depth = 50;
  c.task = Task::classification;
  c.num_classes = classes;
  c.input_shape = {1, 3, size, size};
  c.width_divisor = 8;
  return c;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,lr,loss,accuracy\n";
  char line[128];
  for (const EpochRecord& r : history) {
    std::snprintf(line, sizeof line, "%d,%.6g,%.6f,%.4f\n", r.epoch, r.lr, r.loss, r.accuracy);
    out += line;
  }
  return out;
}

TrainState init_train_state(const NetworkGraph& net, std::uint64_t seed) {
  TrainState s;
  s.params = init_params<float>(net, seed);
  s.buffers = init_buffers<float>(net);
  s.velocity = s.params.zeros_like();
  return s;
}

namespace {

Tensor<float> gather_samples(const Tensor<float>& images, const std::vector<std::int64_t>& order, std::size_t begin,
                             std::size_t count) {
  Dims dims = images.dims();
  const std::int64_t stride = images.size() / dims[0];
  dims[0] = static_cast<std::int64_t>(count);
  Tensor<float> batch(dims);
  for (std::size_t i = 0; i < count; ++i) {
    const float* src = images.raw() + order[begin + i] * stride;
    std::copy(src, src + stride, batch.raw() + static_cast<std::int64_t>(i) * stride);
  }
  return batch;
}

int argmax_row(const Tensor<float>& logits, std::int64_t row) {
  const std::int64_t k = logits.dim(1);
  const float* z = logits.raw() + row * k;
  return static_cast<int>(std::max_element(z, z + k) - z);
}

}  // namespace

std::vector<EpochRecord> train_toy(const NetworkGraph& net, const ToyDataset& data, const TrainConfig& config,
                                   TrainState& state, const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  const auto& outs = net.outputs();
  if (std::none_of(outs.begin(), outs.end(), [](const auto& o) { return o.first == "logits"; })) {
    throw std::invalid_argument("train_toy: network has no logits output");
  }
  const std::size_t n = data.labels.size();
  if (n < 2 || static_cast<std::int64_t>(n) != data.images.dim(0)) {
    throw std::invalid_argument("train_toy: dataset needs at least two labelled samples");
  }
  if (state.velocity.size() == 0) state.velocity = state.params.zeros_like();

  std::vector<EpochRecord> history;
  for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
    const std::uint64_t epoch_seed = rng::mix(config.seed, static_cast<std::uint64_t>(epoch));
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng::uniform(epoch_seed, i) * static_cast<double>(i + 1));
      std::swap(order[i], order[std::min(j, i)]);
    }

    const double lr = lr_at(epoch, config);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0, step = 0;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.batch_size), ++step) {
      const std::size_t count = std::min(n - begin, static_cast<std::size_t>(config.batch_size));
      if (count < 2) break;
      Tensor<float> batch = gather_samples(data.images, order, begin, count);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) labels[i] = data.labels[static_cast<std::size_t>(order[begin + i])];

      Executor<float> exec(net, state.params, state.buffers);
      RunOptions opts;
      opts.training = true;
      opts.seed = rng::mix(epoch_seed, step);
      auto outs = exec.forward(batch, opts);
      const Tensor<float>& logits = outs.at("logits");
      LossResult<float> loss = softmax_cross_entropy(logits, labels);
      ParamStore<float> grads = exec.backward({{"logits", loss.grad}});
      sgd_step(state.params, grads, state.velocity, lr, config);

      loss_sum += loss.loss * static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i) {
        if (argmax_row(logits, static_cast<std::int64_t>(i)) == labels[i]) ++correct;
      }
      seen += count;
    }

    EpochRecord r{epoch, lr, loss_sum / static_cast<double>(seen),
                  static_cast<double>(correct) / static_cast<double>(seen)};
    history.push_back(r);
    state.epoch = epoch + 1;
    if (on_epoch) on_epoch(r);
  }
  return history;
}

std::vector<int> predict(const NetworkGraph& net, const ParamStore<float>& params, ParamStore<float>& buffers,
                         const Tensor<float>& images, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("predict: batch_size must be positive");
  const std::size_t n = static_cast<std::size_t>(images.dim(0));
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> out;
  out.reserve(n);
  Executor<float> exec(net, params, buffers);
  RunOptions opts;
  opts.keep_activations = false;
  for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(n - begin, static_cast<std::size_t>(batch_size));
    auto outs = exec.forward(gather_samples(images, order, begin, count), opts);
    const Tensor<float>& logits = outs.at("logits");
    for (std::size_t i = 0; i < count; ++i) out.push_back(argmax_row(logits, static_cast<std::int64_t>(i)));
  }
  return out;
}

template void sgd_step<float>(ParamStore<float>&, const ParamStore<float>&, ParamStore<float>&, double,
                              const TrainConfig&);
template void sgd_step<double>(ParamStore<double>&, const ParamStore<double>&, ParamStore<double>&, double,
                               const TrainConfig&);
template LossResult<float> cross_entropy<float>(const Tensor<float>&, const std::vector<int>&);
template LossResult<double> cross_entropy<double>(const Tensor<double>&, const std::vector<int>&);
template CombinedLoss<float> combined_loss<float>(const Tensor<float>&, const Tensor<float>&,
                                                  const std::vector<int>&, double);
template CombinedLoss<double> combined_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                                    const std::vector<int>&, double);

}  // namespace pyconv
