#include "pyconv/analyzer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace pyconv {

using nlohmann::json;

namespace {

std::int64_t node_params(const NetworkGraph& net, const LayerNode& n) {
  std::int64_t total = 0;
  for (const auto& name : n.params) {
    for (const auto& p : net.params()) {
      if (p.name == name) total += product(p.dims);
    }
  }
  return total;
}

/// Stage i owns node ids in (output of stage i-1, output of stage i]; nodes
/// past the last stage output belong to the last stage.
std::vector<int> stage_of_nodes(const NetworkGraph& net) {
  std::vector<int> owner(net.nodes().size(), -1);
  const auto& stages = net.stages();
  int begin = 1;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const int end = s + 1 == stages.size() ? static_cast<int>(owner.size()) - 1 : stages[s].output_node;
    for (int id = begin; id <= end; ++id) owner[static_cast<std::size_t>(id)] = static_cast<int>(s);
    begin = std::max(begin, end + 1);
  }
  return owner;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad_right(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

std::string metric_name(Metric m) { return m == Metric::params ? "params" : "flops"; }
std::string unit(Metric m) { return m == Metric::params ? "M" : "G"; }

}  // namespace

std::int64_t node_flops(const LayerNode& n, const std::vector<Dims>& shapes) {
  const Dims& out = shapes[static_cast<std::size_t>(n.id)];
  const std::int64_t out_elems = product(out);
  switch (n.kind) {
    case NodeKind::input:
    case NodeKind::concat:
    case NodeKind::dropout:
      return 0;
    case NodeKind::conv: {
      const auto& c = std::get<ConvNode>(n.spec).conv;
      return out_elems * (c.weight_count() / c.out_channels);
    }
    case NodeKind::pyconv: {
      const auto& spec = std::get<PyConvSpec>(n.spec);
      const std::int64_t per_channel = out_elems / out[1];
      std::int64_t total = 0;
      for (std::size_t l = 0; l < spec.levels.size(); ++l) total += per_channel * spec.level_conv(l).weight_count();
      return total;
    }
    case NodeKind::linear: {
      const auto& l = std::get<LinearNode>(n.spec);
      return out[0] * l.in_features * l.out_features;
    }
    case NodeKind::batchnorm:
    case NodeKind::relu:
    case NodeKind::maxpool:
    case NodeKind::adaptive_avgpool:
    case NodeKind::global_avgpool:
    case NodeKind::upsample:
    case NodeKind::add:
      return out_elems;
  }
  return 0;
}

CostReport count_params(const NetworkGraph& net) {
  CostReport r;
  r.network = net.name();
  const auto owner = stage_of_nodes(net);
  for (const auto& s : net.stages()) r.stages.push_back({s.name, {}, 0, 0});
  for (const auto& n : net.nodes()) {
    NodeCost c;
    c.node = n.id;
    c.name = n.name;
    c.kind = std::string(kind_name(n.kind));
    c.params = node_params(net, n);
    r.total_params += c.params;
    const int s = owner[static_cast<std::size_t>(n.id)];
    if (s >= 0) r.stages[static_cast<std::size_t>(s)].params += c.params;
    r.nodes.push_back(std::move(c));
  }
  return r;
}

CostReport count_flops(const NetworkGraph& net, const Dims& input) {
  CostReport r = count_params(net);
  r.input = input;
  r.has_flops = true;
  const auto shapes = net.infer_shapes(input);
  const auto owner = stage_of_nodes(net);
  for (auto& c : r.nodes) {
    c.output = shapes[static_cast<std::size_t>(c.node)];
    c.flops = node_flops(net.node(c.node), shapes);
    r.total_flops += c.flops;
    const int s = owner[static_cast<std::size_t>(c.node)];
    if (s >= 0) r.stages[static_cast<std::size_t>(s)].flops += c.flops;
  }
  for (std::size_t s = 0; s < r.stages.size(); ++s) {
    const int out = net.stages()[s].output_node;
    if (out >= 0) r.stages[s].output = shapes[static_cast<std::size_t>(out)];
  }
  return r;
}

std::string status_name(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "PASS";
    case CheckStatus::fail: return "FAIL";
    case CheckStatus::unchecked: return "UNCHECKED";
  }
  return "?";
}

CheckResult check(const CostReport& report, const Expectation& e) {
  CheckResult r;
  r.expected = e;
  if (e.metric == Metric::flops && !report.has_flops) return r;
  const double actual = e.metric == Metric::params ? report.params_millions() : report.gflops();
  r.actual = actual;
  if (std::isnan(e.value)) return r;
  r.relative_delta = e.value != 0.0 ? (actual - e.value) / e.value : actual;
  bool ok = false;
  if (e.mode == Comparison::rounded) {
    const double scale = std::pow(10.0, e.decimals);
    ok = std::llround(actual * scale) == std::llround(e.value * scale);
  } else {
    ok = std::abs(actual - e.value) <= e.tolerance * std::abs(e.value);
  }
  r.status = ok ? CheckStatus::pass : CheckStatus::fail;
  return r;
}

std::vector<CheckResult> compare_to_expected(const CostReport& report,
                                             const std::vector<Expectation>& expected) {
  std::vector<CheckResult> out;
  out.reserve(expected.size());
  for (const auto& e : expected) out.push_back(check(report, e));
  return out;
}

std::string report_json(const CostReport& r, const std::vector<CheckResult>& checks) {
  json doc;
  doc["network"] = r.network;
  doc["convention"] = r.convention;
  doc["total_params"] = r.total_params;
  doc["params_millions"] = r.params_millions();
  if (r.has_flops) {
    doc["input_shape"] = r.input;
    doc["total_flops"] = r.total_flops;
    doc["gflops"] = r.gflops();
  }
  json stages = json::array();
  for (const auto& s : r.stages) {
    json j{{"name", s.name}, {"params", s.params}};
    if (r.has_flops) {
      j["flops"] = s.flops;
      j["output"] = s.output;
    }
    stages.push_back(j);
  }
  doc["stages"] = stages;
  json nodes = json::array();
  for (const auto& n : r.nodes) {
    json j{{"name", n.name}, {"kind", n.kind}, {"params", n.params}};
    if (r.has_flops) {
      j["flops"] = n.flops;
      j["output"] = n.output;
    }
    nodes.push_back(j);
  }
  doc["nodes"] = nodes;
  if (!checks.empty()) {
    json cs = json::array();
    for (const auto& c : checks) {
      json j{{"metric", metric_name(c.expected.metric)},
             {"expected", std::isnan(c.expected.value) ? json(nullptr) : json(c.expected.value)},
             {"mode", c.expected.mode == Comparison::rounded ? "rounded" : "relative"},
             {"status", status_name(c.status)},
             {"source", c.expected.source}};
      if (c.expected.mode == Comparison::rounded) {
        j["decimals"] = c.expected.decimals;
      } else {
        j["tolerance"] = c.expected.tolerance;
      }
      if (c.actual) {
        j["actual"] = *c.actual;
        j["relative_delta"] = c.relative_delta;
      } else {
        j["actual"] = nullptr;
      }
      cs.push_back(j);
    }
    doc["checks"] = cs;
  }
  return doc.dump(2);
}

std::string report_text(const CostReport& r, const std::vector<CheckResult>& checks) {
  std::ostringstream os;
  os << r.network;
  if (r.has_flops) os << "  input " << to_string(r.input);
  os << "\n";
  os << pad_right("stage", 10) << pad_right("output", 22) << pad_left("params (M)", 12);
  if (r.has_flops) os << pad_left("FLOPs (G)", 12);
  os << "\n";
  for (const auto& s : r.stages) {
    os << pad_right(s.name, 10) << pad_right(r.has_flops ? to_string(s.output) : "-", 22)
       << pad_left(fmt("%.4f", static_cast<double>(s.params) / 1e6), 12);
    if (r.has_flops) os << pad_left(fmt("%.4f", static_cast<double>(s.flops) / 1e9), 12);
    os << "\n";
  }
  os << pad_right("total", 32) << pad_left(fmt("%.4f", r.params_millions()), 12);
  if (r.has_flops) os << pad_left(fmt("%.4f", r.gflops()), 12);
  os << "\n";
  os << "params " << r.total_params;
  if (r.has_flops) os << "  flops " << r.total_flops;
  os << "\n";
  for (const auto& c : checks) {
    os << status_name(c.status) << "  " << metric_name(c.expected.metric) << " expected "
       << (std::isnan(c.expected.value) ? std::string("n/a") : fmt("%.2f", c.expected.value) + unit(c.expected.metric));
    if (c.actual) {
      os << " actual " << fmt("%.4f", *c.actual) << unit(c.expected.metric) << " ("
         << fmt("%+.2f", 100.0 * c.relative_delta) << "%";
      if (c.expected.mode == Comparison::rounded) {
        os << ", rounded to " << c.expected.decimals << " dp)";
      } else {
        os << ", tol " << fmt("%.1f", 100.0 * c.expected.tolerance) << "%)";
      }
    } else {
      os << " actual n/a";
    }
    if (!c.expected.source.empty()) os << "  [" << c.expected.source << "]";
    os << "\n";
  }
  return os.str();
}

}  // namespace pyconv
