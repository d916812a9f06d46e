#include "pyconv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "pyconv/executor.hpp"
#include "pyconv/nnops.hpp"
#include "pyconv/pyconv.hpp"
#include "pyconv/rng.hpp"

namespace pyconv {

namespace {

using TensorD = Tensor<double>;

double dot(const TensorD& a, const TensorD& b) {
  if (a.dims() != b.dims()) throw ShapeError("gradcheck: projection dims " + to_string(b.dims()) +
                                             " do not match output " + to_string(a.dims()));
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Every index when `samples` is 0 or covers the tensor; otherwise up to
/// 3 * samples distinct random candidates, so that coordinates skipped at a
/// kink can be replaced.
std::vector<std::int64_t> candidate_indices(std::int64_t size, int samples, std::uint64_t seed) {
  std::vector<std::int64_t> idx;
  if (samples <= 0 || size <= samples) {
    idx.resize(static_cast<std::size_t>(size));
    std::iota(idx.begin(), idx.end(), std::int64_t{0});
    return idx;
  }
  const std::size_t want = static_cast<std::size_t>(std::min<std::int64_t>(size, 3 * std::int64_t{samples}));
  std::set<std::int64_t> seen;
  for (std::uint64_t k = 0; idx.size() < want; ++k) {
    const auto i = static_cast<std::int64_t>(rng::uniform(seed, k) * static_cast<double>(size));
    if (seen.insert(i).second) idx.push_back(i);
  }
  return idx;
}

/// Values with |x| >= 0.1 so an eps-perturbation never crosses the ReLU kink.
TensorD away_from_zero(Dims dims, std::uint64_t seed) {
  TensorD t = random_normal<double>(std::move(dims), seed);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = t[i] >= 0 ? t[i] + 0.1 : t[i] - 0.1;
  return t;
}

/// Distinct values spaced 0.01 apart in random order, so max-pool winners
/// are stable under eps-perturbation.
TensorD distinct_values(Dims dims, std::uint64_t seed) {
  TensorD t(std::move(dims));
  std::vector<std::int64_t> order(static_cast<std::size_t>(t.size()));
  std::iota(order.begin(), order.end(), std::int64_t{0});
  std::vector<double> key(order.size());
  for (std::size_t i = 0; i < key.size(); ++i) key[i] = rng::uniform(seed, i);
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)];
  });
  for (std::size_t r = 0; r < order.size(); ++r) t[order[r]] = 0.01 * static_cast<double>(r) - 1.0;
  return t;
}

std::uint64_t sub_seed(const GradCheckOptions& o, std::uint64_t k) { return rng::mix(o.seed, k); }

GradCheckReport check_conv(const std::string& subject, const ConvSpec& spec, Dims in_dims, bool bias,
                           const GradCheckOptions& o) {
  TensorD x = random_normal<double>(std::move(in_dims), sub_seed(o, 1));
  TensorD w = random_normal<double>(spec.weight_dims(), sub_seed(o, 2), 0.5);
  TensorD b = random_normal<double>({spec.out_channels}, sub_seed(o, 3));
  const TensorD* bp = bias ? &b : nullptr;
  const TensorD proj = random_normal<double>(spec.output_dims(x.dims()), sub_seed(o, 4));
  auto g = conv_backward<double>(x, w, spec, proj, bias);
  std::vector<GradTarget> t{{"input", &x, g.input}, {"weight", &w, g.weights}};
  if (bias) t.push_back({"bias", &b, g.bias});
  return finite_difference_check(
      subject, t, [&](int) { return dot(conv_forward<double>(x, w, bp, spec), proj); }, nullptr, o);
}

GradCheckReport check_pyconv(const std::string& subject, const PyConvSpec& spec, Dims in_dims,
                             const GradCheckOptions& o) {
  TensorD x = random_normal<double>(std::move(in_dims), sub_seed(o, 11));
  std::vector<TensorD> w;
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    w.push_back(random_normal<double>(spec.level_conv(l).weight_dims(), sub_seed(o, 20 + l), 0.5));
  }
  const TensorD proj = random_normal<double>(spec.output_dims(x.dims()), sub_seed(o, 12));
  auto g = pyconv_backward<double>(x, spec, w, proj);
  std::vector<GradTarget> t{{"input", &x, g.input}};
  for (std::size_t l = 0; l < w.size(); ++l) t.push_back({"level" + std::to_string(l), &w[l], g.weights[l]});
  return finite_difference_check(
      subject, t, [&](int) { return dot(pyconv_forward<double>(x, spec, w), proj); }, nullptr, o);
}

GradCheckReport check_batchnorm(BatchNormMode mode, const GradCheckOptions& o) {
  const Dims dims{3, 4, 3, 3};
  TensorD x = random_normal<double>(dims, sub_seed(o, 31));
  TensorD gamma = random_normal<double>({4}, sub_seed(o, 32));
  TensorD beta = random_normal<double>({4}, sub_seed(o, 33));
  TensorD rm = random_normal<double>({4}, sub_seed(o, 34), 0.3);
  TensorD rv = random_uniform<double>({4}, sub_seed(o, 35), 0.5, 1.5);
  const TensorD proj = random_normal<double>(dims, sub_seed(o, 36));
  // Train mode moves the running statistics; evaluate on copies so every
  // loss call sees the same state.
  auto run = [&](BatchNormCache<double>* cache) {
    TensorD m = rm, v = rv;
    return batchnorm_forward<double>(x, gamma, beta, m, v, mode, cache);
  };
  BatchNormCache<double> cache;
  run(&cache);
  auto g = batchnorm_backward<double>(cache, gamma, proj);
  std::vector<GradTarget> t{{"input", &x, g.input}, {"gamma", &gamma, g.gamma}, {"beta", &beta, g.beta}};
  const std::string name = mode == BatchNormMode::train ? "batchnorm (train)" : "batchnorm (eval)";
  return finite_difference_check(name, t, [&](int) { return dot(run(nullptr), proj); }, nullptr, o);
}

template <typename Fwd, typename Bwd>
GradCheckReport check_unary(const std::string& subject, TensorD x, Fwd fwd, Bwd bwd,
                            const std::function<std::vector<std::int64_t>()>& signature,
                            const GradCheckOptions& o, std::uint64_t k) {
  const TensorD y = fwd(x);
  const TensorD proj = random_normal<double>(y.dims(), sub_seed(o, k));
  std::vector<GradTarget> t{{"input", &x, bwd(x, proj)}};
  return finite_difference_check(subject, t, [&](int) { return dot(fwd(x), proj); }, signature, o);
}

}  // namespace

std::int64_t GradCheckReport::checked() const {
  std::int64_t n = 0;
  for (const auto& t : tensors) n += t.checked;
  return n;
}

std::int64_t GradCheckReport::skipped() const {
  std::int64_t n = 0;
  for (const auto& t : tensors) n += t.skipped;
  return n;
}

std::string GradCheckReport::to_json() const {
  nlohmann::json doc;
  doc["subject"] = subject;
  doc["epsilon"] = epsilon;
  doc["stencil_order"] = order;
  doc["precision"] = precision;
  doc["threshold"] = threshold;
  doc["max_rel_error"] = max_rel_error;
  doc["worst_tensor"] = worst_tensor;
  doc["passed"] = passed;
  doc["checked"] = checked();
  doc["skipped"] = skipped();
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : tensors) {
    ts.push_back({{"name", t.name},
                  {"max_rel_error", t.max_rel_error},
                  {"checked", t.checked},
                  {"skipped", t.skipped},
                  {"worst_index", t.worst_index},
                  {"worst_analytic", t.worst_analytic},
                  {"worst_numeric", t.worst_numeric}});
  }
  doc["tensors"] = ts;
  return doc.dump(2);
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport finite_difference_check(const std::string& subject, std::vector<GradTarget>& targets,
                                        const std::function<double(int)>& loss,
                                        const std::function<std::vector<std::int64_t>()>& signature,
                                        const GradCheckOptions& o) {
  GradCheckReport r;
  r.subject = subject;
  r.epsilon = o.epsilon;
  r.order = o.order;
  if (o.order != 2 && o.order != 4) throw std::invalid_argument("gradcheck: stencil order must be 2 or 4");
  r.threshold = o.threshold;
  loss(0);
  const std::vector<std::int64_t> base_sig = signature ? signature() : std::vector<std::int64_t>{};
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    GradTarget& t = targets[ti];
    if (t.analytic.dims() != t.value->dims()) {
      throw ShapeError("gradcheck: analytic gradient of '" + t.name + "' has dims " + to_string(t.analytic.dims()));
    }
    TensorGradCheck tc;
    tc.name = t.name;
    const bool sampled = o.samples_per_tensor > 0 && t.value->size() > o.samples_per_tensor;
    for (std::int64_t i : candidate_indices(t.value->size(), o.samples_per_tensor, rng::mix(o.seed, 1000 + ti))) {
      if (sampled && tc.checked >= o.samples_per_tensor) break;
      double& v = (*t.value)[i];
      const double saved = v;
      bool kinked = false;
      auto at = [&](double step) {
        v = saved + step;
        const double f = loss(t.node);
        kinked = kinked || (signature && signature() != base_sig);
        return f;
      };
      const double h = o.epsilon;
      const double d1 = at(h) - at(-h);
      const double numeric =
          o.order == 2 ? d1 / (2.0 * h) : (8.0 * d1 - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      v = saved;
      if (kinked) {
        ++tc.skipped;
        continue;
      }
      const double analytic = t.analytic[i] * (o.corrupt ? 1.01 : 1.0);
      const double err = relative_error(analytic, numeric, o.floor);
      ++tc.checked;
      if (err > tc.max_rel_error || tc.worst_index < 0) {
        tc.max_rel_error = std::max(tc.max_rel_error, err);
        tc.worst_index = i;
        tc.worst_analytic = analytic;
        tc.worst_numeric = numeric;
      }
    }
    loss(t.node);
    if (tc.max_rel_error >= r.max_rel_error) {
      r.max_rel_error = tc.max_rel_error;
      r.worst_tensor = tc.name;
    }
    r.tensors.push_back(std::move(tc));
  }
  r.passed = r.max_rel_error <= o.threshold && r.checked() > 0;
  return r;
}

std::vector<GradCheckReport> check_ops(const GradCheckOptions& o) {
  std::vector<GradCheckReport> out;
  out.push_back(check_conv("conv2d grouped strided", ConvSpec::conv2d(4, 6, 3, 2, 1, 2), {2, 4, 5, 5}, true, o));
  out.push_back(check_conv("conv2d dilated", ConvSpec::conv2d(3, 4, 3, 1, 2, 1, 2), {1, 3, 6, 6}, false, o));
  out.push_back(check_conv("conv2d depthwise", ConvSpec::conv2d(4, 4, 3, 1, 1, 4), {2, 4, 4, 4}, false, o));
  out.push_back(check_conv("conv2d 1x1", ConvSpec::conv2d(5, 3, 1), {2, 5, 3, 3}, true, o));
  out.push_back(
      check_conv("conv3d grouped", ConvSpec::conv3d(4, 4, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, 2), {1, 4, 3, 4, 4}, true, o));
  out.push_back(check_pyconv("pyconv 2-level", make_pyconv2d(8, 8, {3, 5}, 1, std::nullopt, std::vector<std::int64_t>{1, 4}),
                             {2, 8, 6, 6}, o));
  out.push_back(check_pyconv("pyconv 3-level strided",
                             make_pyconv2d(8, 8, {3, 5, 7}, 2, std::vector<std::int64_t>{2, 2, 4},
                                           std::vector<std::int64_t>{1, 2, 4}),
                             {1, 8, 7, 7}, o));
  out.push_back(check_batchnorm(BatchNormMode::train, o));
  out.push_back(check_batchnorm(BatchNormMode::eval, o));
  out.push_back(check_unary(
      "relu", away_from_zero({2, 3, 4, 4}, sub_seed(o, 41)), [](const TensorD& x) { return relu_forward<double>(x); },
      [](const TensorD& x, const TensorD& g) { return relu_backward<double>(x, g); }, nullptr, o, 42));
  {
    const PoolSpec pool = PoolSpec::pool2d(3, 2, 1);
    TensorD x = distinct_values({2, 3, 7, 7}, sub_seed(o, 43));
    out.push_back(check_unary(
        "maxpool 3x3 s2", x, [&](const TensorD& v) { return maxpool_forward<double>(v, pool).output; },
        [&](const TensorD& v, const TensorD& g) {
          return maxpool_backward<double>(v.dims(), maxpool_forward<double>(v, pool).argmax, g);
        },
        nullptr, o, 44));
  }
  out.push_back(check_unary(
      "adaptive avg pool", random_normal<double>({2, 3, 7, 5}, sub_seed(o, 45)),
      [](const TensorD& x) { return adaptive_avg_pool<double>(x, {3, 2}); },
      [](const TensorD& x, const TensorD& g) { return adaptive_avg_pool_backward<double>(x.dims(), g); }, nullptr, o,
      46));
  out.push_back(check_unary(
      "global avg pool", random_normal<double>({2, 3, 4, 5}, sub_seed(o, 47)),
      [](const TensorD& x) { return global_avg_pool<double>(x); },
      [](const TensorD& x, const TensorD& g) { return global_avg_pool_backward<double>(x.dims(), g); }, nullptr, o,
      48));
  out.push_back(check_unary(
      "bilinear upsample", random_normal<double>({2, 3, 3, 4}, sub_seed(o, 49)),
      [](const TensorD& x) { return bilinear_upsample<double>(x, 7, 9); },
      [](const TensorD& x, const TensorD& g) { return bilinear_upsample_backward<double>(x.dims(), g); }, nullptr, o,
      50));
  out.push_back(check_unary(
      "dropout p=0.3", random_normal<double>({2, 3, 4, 4}, sub_seed(o, 51)),
      [](const TensorD& x) { return dropout_forward<double>(x, 0.3, 7); },
      [](const TensorD&, const TensorD& g) { return dropout_backward<double>(g, 0.3, 7); }, nullptr, o, 52));
  {
    TensorD x = random_normal<double>({3, 5}, sub_seed(o, 53));
    TensorD w = random_normal<double>({4, 5}, sub_seed(o, 54));
    TensorD b = random_normal<double>({4}, sub_seed(o, 55));
    const TensorD proj = random_normal<double>({3, 4}, sub_seed(o, 56));
    auto g = linear_backward<double>(x, w, proj);
    std::vector<GradTarget> t{{"input", &x, g.input}, {"weight", &w, g.weights}, {"bias", &b, g.bias}};
    out.push_back(finite_difference_check(
        "linear", t, [&](int) { return dot(linear_forward<double>(x, w, &b), proj); }, nullptr, o));
  }
  {
    TensorD logits = random_normal<double>({4, 6}, sub_seed(o, 57), 2.0);
    const std::vector<int> labels{0, 5, 2, 2};
    auto res = softmax_cross_entropy<double>(logits, labels);
    std::vector<GradTarget> t{{"logits", &logits, res.grad}};
    out.push_back(finite_difference_check(
        "softmax cross-entropy", t, [&](int) { return softmax_cross_entropy<double>(logits, labels).loss; }, nullptr, o));
  }
  return out;
}

GradCheckReport check_network(const NetworkGraph& net, const Dims& input, const GradCheckOptions& o) {
  ParamStore<double> params = init_params<double>(net, rng::mix(o.seed, 71));
  // Non-trivial affine parameters exercise every BN gradient term.
  std::uint64_t pi = 0;
  for (const auto& p : net.params()) {
    ++pi;
    if (p.role == ParamRole::weight && net.node(p.node).kind == NodeKind::linear) {
      // He scale keeps upstream gradients well above the relative-error floor.
      params.get(p.name) = he_normal_init<double>(p.dims, p.fan_in, rng::mix(o.seed ^ 0x5bd1e995ULL, pi));
    } else if (p.role == ParamRole::gamma || p.role == ParamRole::beta || p.role == ParamRole::bias) {
      params.get(p.name) = random_uniform<double>(p.dims, rng::mix(o.seed ^ 0x5bd1e995ULL, pi),
                                                  p.role == ParamRole::gamma ? 0.5 : -0.5,
                                                  p.role == ParamRole::gamma ? 1.5 : 0.5);
    }
  }
  ParamStore<double> buffers = init_buffers<double>(net);
  TensorD x = random_normal<double>(input, rng::mix(o.seed, 72));
  Executor<double> ex(net, params, buffers);
  RunOptions run;
  run.training = true;
  run.seed = rng::mix(o.seed, 73);

  auto outputs = ex.forward(x, run);
  std::map<std::string, TensorD> proj;
  std::uint64_t k = 0;
  for (const auto& [name, t] : outputs) proj[name] = random_normal<double>(t.dims(), rng::mix(o.seed, 80 + k++));
  ParamStore<double> grads = ex.backward(proj);

  std::vector<GradTarget> targets;
  targets.push_back({"input", &x, ex.input_grad(), 0});
  for (const auto& p : net.params()) targets.push_back({p.name, &params.get(p.name), grads.get(p.name), p.node});

  auto loss = [&](int first) {
    const auto out = ex.forward_from(first, x);
    double s = 0.0;
    for (const auto& [name, t] : out) s += dot(t, proj.at(name));
    return s;
  };
  ex.freeze_kinks();
  return finite_difference_check(net.name(), targets, loss, nullptr, o);
}

ToyNetwork toy_scale(const ModelConfig& config) {
  ToyNetwork t{config, {}};
  t.config.num_classes = 5;
  switch (config.task) {
    case Task::classification:
      t.config.width_divisor = 8;
      t.input = {2, 3, 64, 64};
      break;
    case Task::segmentation:
      t.config.width_divisor = 8;
      t.input = {2, 3, 65, 65};
      break;
    case Task::detection:
      t.config.width_divisor = 16;
      t.input = {1, 3, 300, 300};
      break;
    case Task::video:
      t.config.width_divisor = 16;
      t.input = {2, 3, 8, 48, 48};
      break;
  }
  t.config.input_shape = t.input;
  return t;
}

std::vector<ToyNetwork> toy_gradcheck_suite() {
  std::vector<ToyNetwork> suite;
  auto add = [&](Task task, Family family) {
    ModelConfig c = default_config(task);
    c.family = family;
    suite.push_back(toy_scale(c));
  };
  for (Family f : {Family::pyconvresnet, Family::resnet_baseline, Family::pyconvhgresnet, Family::pyconvresnet_top}) {
    add(Task::classification, f);
  }
  add(Task::segmentation, Family::resnet_baseline);
  add(Task::detection, Family::pyconvresnet);
  add(Task::detection, Family::resnet_baseline);
  add(Task::video, Family::pyconvresnet);
  add(Task::video, Family::resnet_baseline);
  return suite;
}

}  // namespace pyconv
