#include "pyconv/graph.hpp"

#include <algorithm>
#include <cmath>

#include "pyconv/rng.hpp"

namespace pyconv {

std::string_view kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::input: return "input";
    case NodeKind::conv: return "conv";
    case NodeKind::pyconv: return "pyconv";
    case NodeKind::batchnorm: return "bn";
    case NodeKind::relu: return "relu";
    case NodeKind::maxpool: return "maxpool";
    case NodeKind::adaptive_avgpool: return "adaptive-avgpool";
    case NodeKind::global_avgpool: return "global-avgpool";
    case NodeKind::upsample: return "bilinear-upsample";
    case NodeKind::linear: return "linear";
    case NodeKind::add: return "add";
    case NodeKind::concat: return "concat";
    case NodeKind::dropout: return "dropout";
  }
  return "?";
}

NetworkGraph::NetworkGraph(std::string name, std::int64_t in_channels, int spatial_rank)
    : name_(std::move(name)), in_channels_(in_channels), spatial_rank_(spatial_rank) {
  if (in_channels < 1) throw ShapeError("graph: input channels must be positive");
  if (spatial_rank != 2 && spatial_rank != 3) throw ShapeError("graph: spatial rank must be 2 or 3");
  push("input", NodeKind::input, std::monostate{}, {});
}

int NetworkGraph::push(const std::string& name, NodeKind kind, NodeSpec spec,
                       std::vector<int> inputs) {
  if (by_name_.count(name)) throw std::invalid_argument("graph: duplicate node name '" + name + "'");
  const int id = static_cast<int>(nodes_.size());
  for (int in : inputs) {
    if (in < 0 || in >= id) {
      throw std::invalid_argument("graph: node '" + name + "' consumes undefined node " +
                                  std::to_string(in));
    }
  }
  LayerNode n;
  n.id = id;
  n.name = name;
  n.kind = kind;
  n.spec = std::move(spec);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  by_name_[name] = id;
  return id;
}

void NetworkGraph::add_param(LayerNode& n, const std::string& suffix, Dims dims, ParamRole role,
                             std::int64_t fan_in) {
  const std::string full = n.name + "." + suffix;
  n.params.push_back(full);
  params_.push_back({full, std::move(dims), role, fan_in, n.id});
}

void NetworkGraph::add_buffer(LayerNode& n, const std::string& suffix, Dims dims, ParamRole role) {
  const std::string full = n.name + "." + suffix;
  n.buffers.push_back(full);
  buffers_.push_back({full, std::move(dims), role, 0, n.id});
}

int NetworkGraph::add_conv(const std::string& name, const ConvSpec& spec, int input, bool bias) {
  spec.check();
  if (static_cast<int>(spec.kernel.size()) != spatial_rank_) {
    throw ShapeError("graph: conv '" + name + "' spatial rank differs from the network");
  }
  const int id = push(name, NodeKind::conv, ConvNode{spec, bias}, {input});
  LayerNode& n = nodes_.back();
  const Dims wd = spec.weight_dims();
  add_param(n, "weight", wd, ParamRole::weight, product(wd) / spec.out_channels);
  if (bias) add_param(n, "bias", {spec.out_channels}, ParamRole::bias, 0);
  return id;
}

int NetworkGraph::add_pyconv(const std::string& name, const PyConvSpec& spec, int input) {
  require_valid(spec);
  if (spec.spatial_rank() != spatial_rank_) {
    throw ShapeError("graph: pyconv '" + name + "' spatial rank differs from the network");
  }
  const int id = push(name, NodeKind::pyconv, spec, {input});
  LayerNode& n = nodes_.back();
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    const ConvSpec c = spec.level_conv(l);
    const Dims wd = c.weight_dims();
    add_param(n, "level" + std::to_string(l + 1) + ".weight", wd, ParamRole::weight,
              product(wd) / c.out_channels);
  }
  return id;
}

int NetworkGraph::add_batchnorm(const std::string& name, std::int64_t channels, int input) {
  const int id = push(name, NodeKind::batchnorm, BatchNormNode{channels}, {input});
  LayerNode& n = nodes_.back();
  add_param(n, "gamma", {channels}, ParamRole::gamma, 0);
  add_param(n, "beta", {channels}, ParamRole::beta, 0);
  add_buffer(n, "running_mean", {channels}, ParamRole::running_mean);
  add_buffer(n, "running_var", {channels}, ParamRole::running_var);
  return id;
}

int NetworkGraph::add_relu(const std::string& name, int input) {
  return push(name, NodeKind::relu, std::monostate{}, {input});
}

int NetworkGraph::add_maxpool(const std::string& name, const PoolSpec& spec, int input) {
  if (static_cast<int>(spec.window.size()) != spatial_rank_) {
    throw ShapeError("graph: maxpool '" + name + "' spatial rank differs from the network");
  }
  return push(name, NodeKind::maxpool, spec, {input});
}

int NetworkGraph::add_adaptive_avgpool(const std::string& name, int max_side, int input) {
  if (max_side < 1) throw ShapeError("graph: adaptive pool target must be >= 1");
  return push(name, NodeKind::adaptive_avgpool, AdaptivePoolNode{max_side}, {input});
}

int NetworkGraph::add_global_avgpool(const std::string& name, int input) {
  return push(name, NodeKind::global_avgpool, std::monostate{}, {input});
}

int NetworkGraph::add_upsample(const std::string& name, int input, int size_reference) {
  return push(name, NodeKind::upsample, std::monostate{}, {input, size_reference});
}

int NetworkGraph::add_linear(const std::string& name, std::int64_t in_features,
                             std::int64_t out_features, int input) {
  if (in_features < 1 || out_features < 1) throw ShapeError("graph: linear extents must be >= 1");
  const int id = push(name, NodeKind::linear, LinearNode{in_features, out_features}, {input});
  LayerNode& n = nodes_.back();
  add_param(n, "weight", {out_features, in_features}, ParamRole::weight, in_features);
  add_param(n, "bias", {out_features}, ParamRole::bias, 0);
  return id;
}

int NetworkGraph::add_add(const std::string& name, int a, int b) {
  return push(name, NodeKind::add, std::monostate{}, {a, b});
}

int NetworkGraph::add_concat(const std::string& name, const std::vector<int>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("graph: concat needs inputs");
  return push(name, NodeKind::concat, std::monostate{}, inputs);
}

int NetworkGraph::add_dropout(const std::string& name, double p, int input) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("graph: dropout p must be in [0, 1)");
  return push(name, NodeKind::dropout, DropoutNode{p}, {input});
}

void NetworkGraph::set_output(const std::string& name, int node) {
  if (node < 0 || node >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("graph: output '" + name + "' refers to an undefined node");
  }
  for (auto& [n, id] : outputs_) {
    if (n == name) {
      id = node;
      return;
    }
  }
  outputs_.emplace_back(name, node);
}

int NetworkGraph::find(const std::string& node_name) const {
  const auto it = by_name_.find(node_name);
  if (it == by_name_.end()) throw std::out_of_range("graph: no node named '" + node_name + "'");
  return it->second;
}

Dims adaptive_pool_target(const Dims& in_spatial, int max_side) {
  Dims out(in_spatial.size());
  const std::int64_t largest = *std::max_element(in_spatial.begin(), in_spatial.end());
  for (std::size_t i = 0; i < in_spatial.size(); ++i) {
    std::int64_t t = max_side;
    if (in_spatial[i] != largest) {
      t = std::llround(static_cast<double>(in_spatial[i]) * max_side / static_cast<double>(largest));
    }
    out[i] = std::clamp<std::int64_t>(t, 1, in_spatial[i]);
  }
  return out;
}

namespace {

Dims replace_spatial(const Dims& d, const Dims& spatial) {
  Dims out{d[0], d[1]};
  out.insert(out.end(), spatial.begin(), spatial.end());
  return out;
}

Dims spatial_of(const Dims& d) { return Dims(d.begin() + 2, d.end()); }

}  // namespace

std::vector<Dims> NetworkGraph::infer_shapes(const Dims& input_dims) const {
  std::vector<Dims> shapes(nodes_.size());
  for (const LayerNode& n : nodes_) {
    auto fail = [&](const std::string& why) {
      return ShapeError("node '" + n.name + "' (" + std::string(kind_name(n.kind)) + "): " + why);
    };
    auto in = [&](std::size_t i) -> const Dims& {
      return shapes[static_cast<std::size_t>(n.inputs[i])];
    };
    auto need_channels = [&](const Dims& d, std::int64_t c) {
      if (d.size() < 2 || d[1] != c) {
        throw fail("expected " + std::to_string(c) + " input channels, got " + to_string(d));
      }
    };
    Dims out;
    try {
      switch (n.kind) {
        case NodeKind::input:
          if (static_cast<int>(input_dims.size()) != spatial_rank_ + 2) {
            throw fail("input must have rank " + std::to_string(spatial_rank_ + 2) + ", got " +
                       to_string(input_dims));
          }
          need_channels(input_dims, in_channels_);
          for (auto e : input_dims) {
            if (e < 1) throw fail("input extents must be >= 1");
          }
          out = input_dims;
          break;
        case NodeKind::conv: {
          const auto& c = std::get<ConvNode>(n.spec).conv;
          need_channels(in(0), c.in_channels);
          out = c.output_dims(in(0));
          break;
        }
        case NodeKind::pyconv: {
          const auto& p = std::get<PyConvSpec>(n.spec);
          need_channels(in(0), p.in_channels);
          out = p.output_dims(in(0));
          break;
        }
        case NodeKind::batchnorm:
          need_channels(in(0), std::get<BatchNormNode>(n.spec).channels);
          out = in(0);
          break;
        case NodeKind::relu:
        case NodeKind::dropout:
          out = in(0);
          break;
        case NodeKind::maxpool:
          out = replace_spatial(in(0), std::get<PoolSpec>(n.spec).output_spatial(spatial_of(in(0))));
          break;
        case NodeKind::adaptive_avgpool:
          out = replace_spatial(
              in(0), adaptive_pool_target(spatial_of(in(0)), std::get<AdaptivePoolNode>(n.spec).max_side));
          break;
        case NodeKind::global_avgpool:
          if (in(0).size() < 3) throw fail("needs spatial axes");
          out = {in(0)[0], in(0)[1]};
          break;
        case NodeKind::upsample: {
          const Dims& src = in(0);
          const Dims& ref = in(1);
          if (src.size() < 4 || ref.size() < 4) throw fail("needs two spatial axes");
          out = src;
          out[out.size() - 2] = ref[ref.size() - 2];
          out[out.size() - 1] = ref[ref.size() - 1];
          break;
        }
        case NodeKind::linear: {
          const auto& l = std::get<LinearNode>(n.spec);
          if (in(0).size() != 2 || in(0)[1] != l.in_features) {
            throw fail("expected [N, " + std::to_string(l.in_features) + "], got " + to_string(in(0)));
          }
          out = {in(0)[0], l.out_features};
          break;
        }
        case NodeKind::add:
          if (in(0) != in(1)) throw fail("operands " + to_string(in(0)) + " and " + to_string(in(1)));
          out = in(0);
          break;
        case NodeKind::concat: {
          out = in(0);
          for (std::size_t i = 1; i < n.inputs.size(); ++i) {
            Dims a = in(i), b = out;
            if (a.size() != b.size()) throw fail("rank mismatch");
            a[1] = b[1] = 0;
            if (a != b) throw fail("non-channel extents differ: " + to_string(in(i)) + " vs " + to_string(out));
            out[1] += in(i)[1];
          }
          break;
        }
      }
    } catch (const ShapeError& e) {
      const std::string what = e.what();
      if (what.rfind("node '", 0) == 0) throw;
      throw fail(what);
    }
    shapes[static_cast<std::size_t>(n.id)] = std::move(out);
  }
  return shapes;
}

std::int64_t NetworkGraph::param_count() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += product(p.dims);
  return total;
}

std::vector<const PyConvSpec*> NetworkGraph::pyconv_specs() const {
  std::vector<const PyConvSpec*> out;
  for (const auto& n : nodes_) {
    if (n.kind == NodeKind::pyconv) out.push_back(&std::get<PyConvSpec>(n.spec));
  }
  return out;
}

template <typename T>
void ParamStore<T>::add(const std::string& name, Tensor<T> t) {
  if (index_.count(name)) throw std::invalid_argument("param store: duplicate name '" + name + "'");
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(t));
}

template <typename T>
Tensor<T>& ParamStore<T>::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("param store: no tensor named '" + name + "'");
  return tensors_[it->second];
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("param store: no tensor named '" + name + "'");
  return tensors_[it->second];
}

template <typename T>
std::int64_t ParamStore<T>::element_count() const {
  std::int64_t total = 0;
  for (const auto& t : tensors_) total += t.size();
  return total;
}

template <typename T>
ParamStore<T> ParamStore<T>::zeros_like() const {
  ParamStore<T> out;
  for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], Tensor<T>(tensors_[i].dims()));
  return out;
}

template <typename T>
ParamStore<T> init_params(const NetworkGraph& g, std::uint64_t seed) {
  ParamStore<T> store;
  std::uint64_t stream = 0;
  for (const TensorInfo& p : g.params()) {
    Tensor<T> t(p.dims);
    switch (p.role) {
      case ParamRole::weight:
        if (g.node(p.node).kind == NodeKind::linear) {
          t = random_normal<T>(p.dims, rng::mix(seed, stream), kClassifierInitStd);
        } else {
          t = he_normal_init<T>(p.dims, p.fan_in, rng::mix(seed, stream));
        }
        break;
      case ParamRole::gamma:
        t.fill(T(1));
        break;
      default:
        break;
    }
    ++stream;
    store.add(p.name, std::move(t));
  }
  return store;
}

template <typename T>
ParamStore<T> init_buffers(const NetworkGraph& g) {
  ParamStore<T> store;
  for (const TensorInfo& b : g.buffers()) {
    Tensor<T> t(b.dims);
    if (b.role == ParamRole::running_var) t.fill(T(1));
    store.add(b.name, std::move(t));
  }
  return store;
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<float> init_params<float>(const NetworkGraph&, std::uint64_t);
template ParamStore<double> init_params<double>(const NetworkGraph&, std::uint64_t);
template ParamStore<float> init_buffers<float>(const NetworkGraph&);
template ParamStore<double> init_buffers<double>(const NetworkGraph&);

}  // namespace pyconv
