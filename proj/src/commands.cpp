#include "pyconv/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "pyconv/analyzer.hpp"
#include "pyconv/detection.hpp"
#include "pyconv/executor.hpp"
#include "pyconv/golden.hpp"
#include "pyconv/gradcheck.hpp"
#include "pyconv/train.hpp"
#include "pyconv/weight_io.hpp"

namespace pyconv {

namespace {

using json = nlohmann::ordered_json;

std::string spatial_text(const Dims& d) {
  std::string s;
  for (std::size_t i = 2; i < d.size(); ++i) s += (i > 2 ? "x" : "") + std::to_string(d[i]);
  return s;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

bool has_failure(const std::vector<CheckResult>& checks) {
  return std::any_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.status == CheckStatus::fail; });
}

json checks_json(const std::vector<CheckResult>& checks) {
  json a = json::array();
  for (const auto& c : checks) {
    json j;
    j["metric"] = c.expected.metric == Metric::params ? "params_m" : "gflops";
    j["expected"] = std::isnan(c.expected.value) ? json(nullptr) : json(c.expected.value);
    j["actual"] = c.actual ? json(*c.actual) : json(nullptr);
    j["status"] = status_name(c.status);
    a.push_back(j);
  }
  return a;
}

}  // namespace

Dims parse_shape(const std::string& text) {
  Dims d;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != part.size() || v < 1) throw ConfigError("input_shape: bad extent '" + part + "'");
    d.push_back(v);
  }
  if (d.size() != 4 && d.size() != 5) throw ConfigError("input_shape: expected N,C,H,W or N,C,T,H,W");
  return d;
}

ModelConfig resolve_config(const CliOptions& o) {
  ModelConfig c = o.config_path.empty() ? default_config(Task::classification) : load_config(o.config_path);
  if (o.input_shape) {
    c.input_shape = *o.input_shape;
    c = parse_config(config_to_json(c));
  }
  return c;
}

std::string describe_text(const NetworkGraph& net, const Dims& input) {
  const std::vector<Dims> shapes = net.infer_shapes(input);
  std::ostringstream os;
  os << net.name() << "  input " << to_string(input) << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-14s %s\n", "stage", "output", "layers");
  os << line;
  for (const StageInfo& s : net.stages()) {
    const std::string out = s.output_node >= 0 ? spatial_text(shapes[static_cast<std::size_t>(s.output_node)]) : "";
    for (std::size_t r = 0; r < s.rows.size(); ++r) {
      std::string row = s.rows[r];
      if (r + 1 == s.rows.size() && s.repeat > 1) row += "  (x" + std::to_string(s.repeat) + ")";
      std::snprintf(line, sizeof line, "%-8s %-14s %s\n", r == 0 ? s.name.c_str() : "", r == 0 ? out.c_str() : "",
                    row.c_str());
      os << line;
    }
  }
  for (const auto& [name, node] : net.outputs()) {
    os << "output " << name << " " << to_string(shapes[static_cast<std::size_t>(node)]) << "\n";
  }
  os << "params " << net.param_count() << "\n";
  return os.str();
}

int cmd_describe(const CliOptions& o, std::ostream& out) {
  const ModelConfig c = resolve_config(o);
  out << describe_text(build_network(c), c.input_shape);
  return kExitOk;
}

int cmd_analyze(const CliOptions& o, std::ostream& out) {
  if (!o.expect.empty() && o.config_path.empty()) {
    std::vector<std::string> ids = o.expect == "all" ? golden_table_ids() : std::vector<std::string>{o.expect};
    json doc = json::array();
    bool failed = false;
    for (const std::string& id : ids) {
      const GoldenTable& table = golden_table(id);
      out << id << ": " << table.title << "\n";
      for (const GoldenRow& row : table.rows) {
        const CostReport r = count_flops(build_network(row.config), row.config.input_shape);
        const auto checks = compare_golden(r, row, id);
        failed = failed || has_failure(checks);
        for (const auto& c : checks) {
          const bool params = c.expected.metric == Metric::params;
          out << "  " << status_name(c.status) << "  " << row.label << "  " << (params ? "params " : "FLOPs ")
              << (c.actual ? fixed(*c.actual, params ? 3 : 2) : std::string("n/a")) << (params ? "M" : "G")
              << " expected "
              << (std::isnan(c.expected.value) ? std::string("n/a") : fixed(c.expected.value, 2))
              << (c.actual && !std::isnan(c.expected.value) ? " (" + fixed(100.0 * c.relative_delta, 2) + "%)" : "")
              << "\n";
        }
        doc.push_back({{"table", id}, {"row", row.label}, {"checks", checks_json(checks)}});
      }
    }
    if (!o.out.empty()) write_text(o.out, doc.dump(2) + "\n");
    out << (failed ? "golden check FAILED\n" : "golden check passed\n");
    return failed ? kExitMismatch : kExitOk;
  }

  const ModelConfig c = resolve_config(o);
  const CostReport r = count_flops(build_network(c), c.input_shape);
  std::vector<CheckResult> checks;
  if (!o.expect.empty()) {
    const GoldenTable& table = golden_table(o.expect);
    const GoldenRow* row = find_golden_row(table, c);
    if (!row) throw ConfigError("config matches no row of " + o.expect);
    checks = compare_golden(r, *row, o.expect);
  }
  if (!o.out.empty()) write_text(o.out, report_json(r, checks) + "\n");
  out << (o.json ? report_json(r, checks) + "\n" : report_text(r, checks));
  return has_failure(checks) ? kExitMismatch : kExitOk;
}

int cmd_gradcheck(const CliOptions& o, std::ostream& out) {
  GradCheckOptions g;
  g.seed = o.seed;
  g.corrupt = o.corrupt;
  g.samples_per_tensor = o.samples;
  std::vector<GradCheckReport> reports;
  if (o.ops || o.config_path.empty()) reports = check_ops(g);
  if (!o.ops) {
    std::vector<ToyNetwork> nets;
    if (!o.config_path.empty()) {
      const ModelConfig c = resolve_config(o);
      nets.push_back(o.toy_scale ? toy_scale(c) : ToyNetwork{c, c.input_shape});
    } else {
      nets = toy_gradcheck_suite();
    }
    for (const ToyNetwork& t : nets) reports.push_back(check_network(build_network(t.config), t.input, g));
  }

  bool passed = true;
  json doc = json::array();
  for (const auto& r : reports) {
    passed = passed && r.passed;
    doc.push_back(json::parse(r.to_json()));
    if (!o.json) {
      char line[256];
      std::snprintf(line, sizeof line, "%s  %-28s max rel %.3e  checked %lld  skipped %lld  worst %s\n",
                    r.passed ? "PASS" : "FAIL", r.subject.c_str(), r.max_rel_error,
                    static_cast<long long>(r.checked()), static_cast<long long>(r.skipped()),
                    r.worst_tensor.c_str());
      out << line;
    }
  }
  if (o.json) out << doc.dump(2) << "\n";
  if (!o.out.empty()) write_text(o.out, doc.dump(2) + "\n");
  return passed ? kExitOk : kExitMismatch;
}

int cmd_train_toy(const CliOptions& o, std::ostream& out) {
  const ModelConfig c = o.config_path.empty() ? toy_model_config() : resolve_config(o);
  if (c.task != Task::classification) throw ConfigError("train-toy: config must be a classification network");
  if (c.input_shape[2] != c.input_shape[3]) throw ConfigError("train-toy: input must be square");
  const NetworkGraph net = build_network(c);
  const ToyDataset data =
      make_toy_dataset(o.seed, o.per_class, c.num_classes, static_cast<int>(c.input_shape[2]));

  TrainConfig tc;
  tc.base_lr = o.lr;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.seed = o.seed;
  tc.validate();

  TrainState state =
      o.resume.empty() ? init_train_state(net, o.seed) : train_state_from_file(load_weight_file(o.resume), net);
  if (state.epoch > tc.epochs) throw ConfigError("train-toy: resume state is past --epochs");

  std::ofstream history_file;
  if (!o.history.empty()) {
    history_file.open(o.history, std::ios::binary);
    if (!history_file) throw std::runtime_error("cannot write " + o.history);
  }
  std::ostream& csv = o.history.empty() ? out : history_file;
  csv << "epoch,lr,loss,accuracy\n";
  double best = 0.0;
  int reached = -1;
  train_toy(net, data, tc, state, [&](const EpochRecord& r) {
    csv << history_csv({r}).substr(std::string("epoch,lr,loss,accuracy\n").size()) << std::flush;
    best = std::max(best, r.accuracy);
    if (reached < 0 && o.expect_accuracy > 0.0 && r.accuracy >= o.expect_accuracy) reached = r.epoch;
  });
  if (!o.out.empty()) save_weight_file(o.out, train_state_file(state));

  if (o.expect_accuracy > 0.0) {
    if (!o.history.empty()) {
      out << (reached >= 0 ? "reached accuracy " + fixed(o.expect_accuracy, 2) + " at epoch " +
                                 std::to_string(reached) + "\n"
                           : "accuracy " + fixed(o.expect_accuracy, 2) + " not reached; best " + fixed(best, 4) +
                                 "\n");
    }
    return reached >= 0 ? kExitOk : kExitMismatch;
  }
  return kExitOk;
}

int cmd_infer(const CliOptions& o, std::ostream& out) {
  const ModelConfig c = o.config_path.empty() && o.toy_sample ? toy_model_config() : resolve_config(o);
  const NetworkGraph net = build_network(c);
  ParamStore<float> params = init_params<float>(net, o.seed);
  ParamStore<float> buffers = init_buffers<float>(net);
  if (!o.weights.empty()) {
    const WeightFile w = load_weight_file(o.weights);
    load_into(w, params);
    load_into(w, buffers);
  }

  Tensor<float> x;
  json doc;
  doc["network"] = net.name();
  if (!o.input.empty()) {
    const WeightFile f = load_weight_file(o.input);
    if (f.tensors.size() != 1) throw ConfigError("infer: input file must hold exactly one tensor");
    x = as_tensor<float>(f.tensors[0].second);
  } else if (o.toy_sample) {
    if (c.task != Task::classification) throw ConfigError("infer: --toy-sample needs a classification config");
    const ToyDataset d = make_toy_dataset(o.seed, o.per_class, c.num_classes, static_cast<int>(c.input_shape[2]));
    const int i = *o.toy_sample;
    if (i < 0 || i >= static_cast<int>(d.labels.size())) throw ConfigError("infer: --toy-sample out of range");
    const std::int64_t stride = d.images.size() / d.images.dim(0);
    Dims one = d.images.dims();
    one[0] = 1;
    x = Tensor<float>(one, std::vector<float>(d.images.raw() + i * stride, d.images.raw() + (i + 1) * stride));
    doc["label"] = d.labels[static_cast<std::size_t>(i)];
  } else {
    x = random_normal<float>(c.input_shape, o.seed ^ 0x9e3779b97f4a7c15ULL);
  }
  doc["input_shape"] = x.dims();

  Executor<float> exec(net, params, buffers);
  RunOptions run;
  run.keep_activations = false;
  const auto outputs = exec.forward(x, run);

  switch (c.task) {
    case Task::classification:
    case Task::video: {
      const Tensor<float>& z = outputs.at("logits");
      const std::int64_t k = z.dim(1);
      json preds = json::array();
      for (std::int64_t n = 0; n < z.dim(0); ++n) {
        const float* row = z.raw() + n * k;
        const std::int64_t best = std::max_element(row, row + k) - row;
        double sum = 0.0;
        for (std::int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j] - row[best]));
        preds.push_back({{"class", best}, {"probability", 1.0 / sum}});
      }
      doc["output_shape"] = z.dims();
      if (doc.contains("label")) doc["match"] = preds[0]["class"].get<int>() == doc["label"].get<int>();
      doc["predictions"] = preds;
      break;
    }
    case Task::segmentation: {
      const Tensor<float>& z = outputs.at("main");
      const std::int64_t n = z.dim(0), k = z.dim(1), hw = z.spatial_size();
      Tensor<float> map({n, z.dim(2), z.dim(3)});
      std::vector<std::int64_t> histogram(static_cast<std::size_t>(k), 0);
      for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t p = 0; p < hw; ++p) {
          std::int64_t best = 0;
          for (std::int64_t j = 1; j < k; ++j) {
            if (z[(b * k + j) * hw + p] > z[(b * k + best) * hw + p]) best = j;
          }
          map[b * hw + p] = static_cast<float>(best);
          ++histogram[static_cast<std::size_t>(best)];
        }
      }
      doc["output_shape"] = z.dims();
      doc["map_shape"] = map.dims();
      json classes = json::object();
      for (std::size_t j = 0; j < histogram.size(); ++j) {
        if (histogram[j]) classes[std::to_string(j)] = histogram[j];
      }
      doc["pixels_per_class"] = classes;
      if (!o.out.empty()) {
        WeightFile f;
        f.add("segmentation", std::move(map));
        save_weight_file(o.out, f);
      }
      break;
    }
    case Task::detection: {
      if (x.dim(0) != 1) throw ConfigError("infer: detection takes a batch of one image");
      DefaultBoxConfig boxes;
      boxes.image_size = static_cast<int>(x.dim(2));
      const std::vector<Detection> found = detect(outputs, boxes, c.num_classes);
      json dets = json::array();
      for (const Detection& d : found) {
        dets.push_back({{"label", d.label},
                        {"score", d.score},
                        {"box", {d.box.x0, d.box.y0, d.box.x1, d.box.y1}}});
      }
      doc["detections"] = dets;
      break;
    }
  }
  if (!o.out.empty() && c.task != Task::segmentation) write_text(o.out, doc.dump(2) + "\n");
  out << doc.dump(2) << "\n";
  return kExitOk;
}

int cmd_export_weights(const CliOptions& o, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("export-weights: --out is required");
  const ModelConfig c = resolve_config(o);
  const NetworkGraph net = build_network(c);
  WeightFile f;
  const ParamStore<float> params = init_params<float>(net, o.seed);
  f.add_all(params);
  f.add_all(init_buffers<float>(net));
  save_weight_file(o.out, f);
  out << "wrote " << f.tensors.size() << " tensors (" << params.element_count() << " parameters) to " << o.out
      << "\n";
  return kExitOk;
}

}  // namespace pyconv
