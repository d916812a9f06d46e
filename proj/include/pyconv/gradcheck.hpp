#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pyconv/config.hpp"
#include "pyconv/graph.hpp"

namespace pyconv {

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// Accuracy order of the central stencil: 2 uses f(x +- h), 4 adds
  /// f(x +- 2h) and cancels the h^2 truncation term.
  int order = 4;
  double threshold = 1e-5;
  /// Denominator floor of the relative error, so that near-zero gradients
  /// are judged on absolute error.
  double floor = 1e-4;
  /// Checked coordinates per tensor; 0 checks every coordinate. Sampled
  /// coordinates skipped at a kink are replaced, up to 3x the target.
  int samples_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Negative control: scale every analytic gradient by 1.01.
  bool corrupt = false;
};

struct TensorGradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
  /// Coordinates whose perturbation moved a ReLU sign or a max-pool argmax.
  std::int64_t skipped = 0;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::string subject;
  double epsilon = 0.0;
  int order = 0;
  std::string precision = "float64";
  double threshold = 0.0;
  std::vector<TensorGradCheck> tensors;
  double max_rel_error = 0.0;
  std::string worst_tensor;
  bool passed = false;

  std::int64_t checked() const;
  std::int64_t skipped() const;
  std::string to_json() const;
};

double relative_error(double analytic, double numeric, double floor);

/// One tensor under test: `value` is perturbed in place, `analytic` holds
/// dLoss/dvalue from the backward pass being checked.
struct GradTarget {
  std::string name;
  Tensor<double>* value = nullptr;
  Tensor<double> analytic;
  /// First graph node that reads `value`; passed to the loss so it can skip
  /// unaffected work.
  int node = 0;
};

/// Central differences of `loss` against each target's analytic gradient.
/// `loss(node)` must evaluate the full loss given that only values read at or
/// after `node` changed since the previous call. `signature`, when set, is
/// evaluated after every perturbed loss; a change from the unperturbed
/// signature marks the coordinate as skipped.
GradCheckReport finite_difference_check(const std::string& subject, std::vector<GradTarget>& targets,
                                        const std::function<double(int)>& loss,
                                        const std::function<std::vector<std::int64_t>()>& signature,
                                        const GradCheckOptions& options);

/// Every differentiable op on small random inputs (conv 2D/3D, grouped and
/// dilated conv, PyConv, batch norm in both modes, ReLU, max pool, adaptive
/// and global average pool, bilinear upsample, linear, softmax cross-entropy,
/// dropout). ReLU inputs are kept at |x| >= 0.1 and max-pool inputs distinct.
std::vector<GradCheckReport> check_ops(const GradCheckOptions& options);

/// Loss = sum over outputs of <w_o, out_o> with fixed random w_o; parameters
/// and the input are checked. Batch norm runs in train mode. ReLU masks and
/// max-pool selections are frozen at the unperturbed forward, so the finite
/// differences see the smooth piece that backward differentiates.
GradCheckReport check_network(const NetworkGraph& net, const Dims& input, const GradCheckOptions& options);

struct ToyNetwork {
  ModelConfig config;
  Dims input;
};

/// Same family, schedule and task with 5 classes, width /8 (/16 for
/// detection and video) and the smallest input that keeps every stage and
/// head above 1x1 where batch statistics need it.
ToyNetwork toy_scale(const ModelConfig& config);

/// Every classification family, the segmentation net, both detectors and
/// both video nets at toy scale.
std::vector<ToyNetwork> toy_gradcheck_suite();

}  // namespace pyconv
