#include "pyconv/executor.hpp"

#include <algorithm>

#include "pyconv/rng.hpp"

namespace pyconv {

namespace {

template <typename T>
void accumulate(Tensor<T>& dst, Tensor<T>&& src) {
  if (dst.empty()) {
    dst = std::move(src);
    return;
  }
  if (dst.dims() != src.dims()) throw ShapeError("backward: gradient shape mismatch");
  auto d = dst.data();
  const auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
Tensor<T> add_tensors(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out(a.dims());
  const std::int64_t n = a.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace

template <typename T>
Executor<T>::Executor(const NetworkGraph& graph, const ParamStore<T>& params, ParamStore<T>& buffers)
    : graph_(graph), params_(params), buffers_(buffers) {
  for (const auto& p : graph.params()) {
    if (params.get(p.name).dims() != p.dims) {
      throw ShapeError("executor: parameter '" + p.name + "' has dims " +
                       to_string(params.get(p.name).dims()) + ", expected " + to_string(p.dims));
    }
  }
  for (const auto& b : graph.buffers()) {
    if (buffers.get(b.name).dims() != b.dims) {
      throw ShapeError("executor: buffer '" + b.name + "' has wrong dims");
    }
  }
}

template <typename T>
std::map<std::string, Tensor<T>> Executor<T>::forward(const Tensor<T>& input,
                                                      const RunOptions& options) {
  shapes_ = graph_.infer_shapes(input.dims());
  acts_.assign(graph_.nodes().size(), Tensor<T>());
  cache_.assign(graph_.nodes().size(), NodeCache{});
  last_ = options;
  have_forward_ = false;
  run_nodes(0, input);
  have_forward_ = options.keep_activations;
  return collect_outputs();
}

template <typename T>
std::map<std::string, Tensor<T>> Executor<T>::forward_from(int first, const Tensor<T>& input) {
  if (!have_forward_) throw std::logic_error("executor: forward_from needs a forward with kept activations");
  if (first < 0 || first >= static_cast<int>(graph_.nodes().size())) {
    throw std::out_of_range("executor: forward_from node " + std::to_string(first));
  }
  if (input.dims() != acts_[0].dims()) throw ShapeError("executor: forward_from input dims changed");
  run_nodes(first, input);
  return collect_outputs();
}

template <typename T>
std::map<std::string, Tensor<T>> Executor<T>::collect_outputs() const {
  std::map<std::string, Tensor<T>> outputs;
  for (const auto& [name, id] : graph_.outputs()) outputs[name] = acts_[static_cast<std::size_t>(id)];
  return outputs;
}

template <typename T>
void Executor<T>::run_nodes(int first, const Tensor<T>& input) {
  const auto& nodes = graph_.nodes();
  const RunOptions& options = last_;
  std::vector<int> last_use(nodes.size(), -1);
  for (const auto& n : nodes) {
    for (int in : n.inputs) last_use[static_cast<std::size_t>(in)] = n.id;
  }
  for (const auto& [name, id] : graph_.outputs()) last_use[static_cast<std::size_t>(id)] = INT32_MAX;

  const BatchNormMode mode = options.training ? BatchNormMode::train : BatchNormMode::eval;
  for (auto it = nodes.begin() + first; it != nodes.end(); ++it) {
    const LayerNode& n = *it;
    auto in = [&](std::size_t i) -> const Tensor<T>& {
      return acts_[static_cast<std::size_t>(n.inputs[i])];
    };
    NodeCache& c = cache_[static_cast<std::size_t>(n.id)];
    Tensor<T> out;
    switch (n.kind) {
      case NodeKind::input:
        out = input;
        break;
      case NodeKind::conv: {
        const auto& cn = std::get<ConvNode>(n.spec);
        const Tensor<T>* bias = cn.bias ? &params_.get(n.params[1]) : nullptr;
        out = conv_forward<T>(in(0), params_.get(n.params[0]), bias, cn.conv);
        break;
      }
      case NodeKind::pyconv: {
        const auto& spec = std::get<PyConvSpec>(n.spec);
        std::vector<Tensor<T>> levels;
        for (std::size_t l = 0; l < spec.levels.size(); ++l) {
          levels.push_back(conv_forward<T>(in(0), params_.get(n.params[l]), nullptr, spec.level_conv(l)));
        }
        out = levels.size() == 1 ? std::move(levels[0]) : concat_channels<T>(levels);
        break;
      }
      case NodeKind::batchnorm:
        out = batchnorm_forward<T>(in(0), params_.get(n.params[0]), params_.get(n.params[1]),
                                   buffers_.get(n.buffers[0]), buffers_.get(n.buffers[1]), mode,
                                   options.keep_activations ? &c.bn : nullptr);
        break;
      case NodeKind::relu:
        if (frozen_) {
          const auto& mask = relu_masks_[static_cast<std::size_t>(n.id)];
          out = Tensor<T>(in(0).dims());
          for (std::int64_t i = 0; i < out.size(); ++i) out[i] = mask[static_cast<std::size_t>(i)] ? in(0)[i] : T(0);
        } else {
          out = relu_forward<T>(in(0));
        }
        break;
      case NodeKind::maxpool: {
        if (frozen_) {
          const auto& sel = frozen_argmax_[static_cast<std::size_t>(n.id)];
          out = Tensor<T>(shapes_[static_cast<std::size_t>(n.id)]);
          for (std::int64_t i = 0; i < out.size(); ++i) out[i] = in(0)[sel[static_cast<std::size_t>(i)]];
          c.argmax = sel;
          break;
        }
        auto r = maxpool_forward<T>(in(0), std::get<PoolSpec>(n.spec));
        out = std::move(r.output);
        if (options.keep_activations) c.argmax = std::move(r.argmax);
        break;
      }
      case NodeKind::adaptive_avgpool:
        out = adaptive_avg_pool<T>(
            in(0), adaptive_pool_target(in(0).spatial_dims(), std::get<AdaptivePoolNode>(n.spec).max_side));
        break;
      case NodeKind::global_avgpool:
        out = global_avg_pool<T>(in(0));
        break;
      case NodeKind::upsample: {
        const Dims& ref = in(1).dims();
        out = bilinear_upsample<T>(in(0), ref[ref.size() - 2], ref[ref.size() - 1]);
        break;
      }
      case NodeKind::linear:
        out = linear_forward<T>(in(0), params_.get(n.params[0]), &params_.get(n.params[1]));
        break;
      case NodeKind::add:
        out = add_tensors(in(0), in(1));
        break;
      case NodeKind::concat: {
        std::vector<Tensor<T>> parts;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) parts.push_back(in(i));
        out = concat_channels<T>(parts);
        break;
      }
      case NodeKind::dropout: {
        const double p = std::get<DropoutNode>(n.spec).p;
        if (options.training && p > 0.0) {
          c.dropout_seed = rng::mix(options.seed, static_cast<std::uint64_t>(n.id));
          out = dropout_forward<T>(in(0), p, c.dropout_seed);
        } else {
          out = in(0);
        }
        break;
      }
    }
    acts_[static_cast<std::size_t>(n.id)] = std::move(out);
    if (!options.keep_activations) {
      for (int i : n.inputs) {
        if (last_use[static_cast<std::size_t>(i)] == n.id) acts_[static_cast<std::size_t>(i)] = Tensor<T>();
      }
    }
  }
}

template <typename T>
ParamStore<T> Executor<T>::backward(const std::map<std::string, Tensor<T>>& output_grads) {
  if (!have_forward_) throw std::logic_error("executor: backward needs a forward with kept activations");
  const auto& nodes = graph_.nodes();
  std::vector<Tensor<T>> grads(nodes.size());
  input_grad_ = Tensor<T>();
  for (const auto& [name, g] : output_grads) {
    int id = -1;
    for (const auto& [oname, oid] : graph_.outputs()) {
      if (oname == name) id = oid;
    }
    if (id < 0) throw std::invalid_argument("executor: no output named '" + name + "'");
    if (g.dims() != acts_[static_cast<std::size_t>(id)].dims()) {
      throw ShapeError("executor: gradient for '" + name + "' has dims " + to_string(g.dims()));
    }
    accumulate(grads[static_cast<std::size_t>(id)], Tensor<T>(g));
  }

  ParamStore<T> pgrads;
  for (const auto& p : graph_.params()) pgrads.add(p.name, Tensor<T>(p.dims));

  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    const LayerNode& n = *it;
    Tensor<T>& go = grads[static_cast<std::size_t>(n.id)];
    if (go.empty()) continue;
    auto in = [&](std::size_t i) -> const Tensor<T>& {
      return acts_[static_cast<std::size_t>(n.inputs[i])];
    };
    auto send = [&](std::size_t i, Tensor<T>&& g) {
      accumulate(grads[static_cast<std::size_t>(n.inputs[i])], std::move(g));
    };
    const NodeCache& c = cache_[static_cast<std::size_t>(n.id)];
    switch (n.kind) {
      case NodeKind::input:
        input_grad_ = std::move(go);
        break;
      case NodeKind::conv: {
        const auto& cn = std::get<ConvNode>(n.spec);
        auto g = conv_backward<T>(in(0), params_.get(n.params[0]), cn.conv, go, cn.bias);
        pgrads.get(n.params[0]) = std::move(g.weights);
        if (cn.bias) pgrads.get(n.params[1]) = std::move(g.bias);
        send(0, std::move(g.input));
        break;
      }
      case NodeKind::pyconv: {
        const auto& spec = std::get<PyConvSpec>(n.spec);
        const auto off = spec.channel_offsets();
        for (std::size_t l = 0; l < spec.levels.size(); ++l) {
          Tensor<T> gl = spec.levels.size() == 1 ? go : slice_channels(go, off[l], off[l + 1] - off[l]);
          auto g = conv_backward<T>(in(0), params_.get(n.params[l]), spec.level_conv(l), gl);
          pgrads.get(n.params[l]) = std::move(g.weights);
          send(0, std::move(g.input));
        }
        break;
      }
      case NodeKind::batchnorm: {
        auto g = batchnorm_backward<T>(c.bn, params_.get(n.params[0]), go);
        pgrads.get(n.params[0]) = std::move(g.gamma);
        pgrads.get(n.params[1]) = std::move(g.beta);
        send(0, std::move(g.input));
        break;
      }
      case NodeKind::relu:
        send(0, relu_backward<T>(in(0), go));
        break;
      case NodeKind::maxpool:
        send(0, maxpool_backward<T>(in(0).dims(), c.argmax, go));
        break;
      case NodeKind::adaptive_avgpool:
        send(0, adaptive_avg_pool_backward<T>(in(0).dims(), go));
        break;
      case NodeKind::global_avgpool:
        send(0, global_avg_pool_backward<T>(in(0).dims(), go));
        break;
      case NodeKind::upsample:
        send(0, bilinear_upsample_backward<T>(in(0).dims(), go));
        break;
      case NodeKind::linear: {
        auto g = linear_backward<T>(in(0), params_.get(n.params[0]), go);
        pgrads.get(n.params[0]) = std::move(g.weights);
        pgrads.get(n.params[1]) = std::move(g.bias);
        send(0, std::move(g.input));
        break;
      }
      case NodeKind::add:
        send(0, Tensor<T>(go));
        send(1, std::move(go));
        break;
      case NodeKind::concat: {
        std::int64_t start = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const std::int64_t ch = in(i).channels();
          send(i, slice_channels(go, start, ch));
          start += ch;
        }
        break;
      }
      case NodeKind::dropout: {
        const double p = std::get<DropoutNode>(n.spec).p;
        if (last_.training && p > 0.0) {
          send(0, dropout_backward<T>(go, p, c.dropout_seed));
        } else {
          send(0, std::move(go));
        }
        break;
      }
    }
    if (n.kind != NodeKind::input) go = Tensor<T>();
  }
  return pgrads;
}

template <typename T>
const Tensor<T>& Executor<T>::activation(int node) const {
  const Tensor<T>& a = acts_.at(static_cast<std::size_t>(node));
  if (a.empty()) throw std::logic_error("executor: activation was not kept");
  return a;
}

template <typename T>
void Executor<T>::freeze_kinks() {
  if (!have_forward_) throw std::logic_error("executor: freeze_kinks needs a forward with kept activations");
  const auto& nodes = graph_.nodes();
  relu_masks_.assign(nodes.size(), {});
  frozen_argmax_.assign(nodes.size(), {});
  for (const auto& n : nodes) {
    const auto id = static_cast<std::size_t>(n.id);
    if (n.kind == NodeKind::relu) {
      const Tensor<T>& x = acts_[static_cast<std::size_t>(n.inputs[0])];
      relu_masks_[id].resize(static_cast<std::size_t>(x.size()));
      for (std::int64_t i = 0; i < x.size(); ++i) relu_masks_[id][static_cast<std::size_t>(i)] = x[i] > T(0);
    } else if (n.kind == NodeKind::maxpool) {
      frozen_argmax_[id] = cache_[id].argmax;
    }
  }
  frozen_ = true;
}

template <typename T>
void Executor<T>::unfreeze_kinks() {
  frozen_ = false;
  relu_masks_.clear();
  frozen_argmax_.clear();
}

template <typename T>
std::vector<std::int64_t> Executor<T>::kink_signature() const {
  std::vector<std::int64_t> sig;
  for (const auto& n : graph_.nodes()) {
    if (n.kind == NodeKind::relu) {
      const Tensor<T>& x = acts_[static_cast<std::size_t>(n.inputs[0])];
      for (std::int64_t i = 0; i < x.size(); ++i) sig.push_back(x[i] > T(0) ? 1 : 0);
    } else if (n.kind == NodeKind::maxpool) {
      const auto& a = cache_[static_cast<std::size_t>(n.id)].argmax;
      sig.insert(sig.end(), a.begin(), a.end());
    }
  }
  return sig;
}

template class Executor<float>;
template class Executor<double>;

}  // namespace pyconv
