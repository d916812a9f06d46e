#include <omp.h>

#include <iostream>
#include <stdexcept>

#include <CLI11.hpp>

#include "pyconv/commands.hpp"

using namespace pyconv;

namespace {

void add_common(CLI::App* cmd, CliOptions& o, std::string& shape) {
  cmd->add_option("--config", o.config_path, "network config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--input-shape", shape, "N,C,H,W or N,C,T,H,W");
  cmd->add_option("--seed", o.seed, "seed for weights, data and noise");
  cmd->add_option("--threads", o.threads, "OpenMP threads (0 keeps the runtime default)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", o.out, "output file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PyConv network builder, cost analyzer and toy trainer"};
  app.require_subcommand(1);
  CliOptions o;
  std::string shape;

  auto* describe = app.add_subcommand("describe", "print the stage table of a network");
  add_common(describe, o, shape);

  auto* analyze = app.add_subcommand("analyze", "count parameters and FLOPs, optionally against a golden table");
  add_common(analyze, o, shape);
  analyze->add_option("--expect", o.expect, "golden table id (table1..table7, or all)");
  analyze->add_flag("--json", o.json, "print the JSON report instead of text");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks in float64");
  add_common(gradcheck, o, shape);
  gradcheck->add_flag("--toy-scale", o.toy_scale, "shrink the configured network to toy width and input");
  gradcheck->add_flag("--ops", o.ops, "check single ops only");
  gradcheck->add_flag("--corrupt", o.corrupt, "scale analytic gradients by 1.01 (negative control)");
  gradcheck->add_option("--samples", o.samples, "coordinates per parameter tensor (0 = all)")
      ->check(CLI::NonNegativeNumber);
  gradcheck->add_flag("--json", o.json, "print the JSON report instead of text");

  auto* train = app.add_subcommand("train-toy", "train on the synthetic grating set");
  add_common(train, o, shape);
  train->add_option("--epochs", o.epochs, "last epoch (exclusive)");
  train->add_option("--per-class", o.per_class, "samples per class");
  train->add_option("--batch-size", o.batch_size, "mini-batch size");
  train->add_option("--lr", o.lr, "base learning rate");
  train->add_option("--resume", o.resume, "training state written by a previous --out")->check(CLI::ExistingFile);
  train->add_option("--history", o.history, "CSV history file (default stdout)");
  train->add_option("--expect-accuracy", o.expect_accuracy, "exit 2 unless an epoch reaches this accuracy");

  auto* infer = app.add_subcommand("infer", "run a network on one input");
  add_common(infer, o, shape);
  infer->add_option("--weights", o.weights, "weight file (default: seeded initialization)")->check(CLI::ExistingFile);
  infer->add_option("--input", o.input, "single-tensor weight file holding the input")->check(CLI::ExistingFile);
  infer->add_option("--toy-sample", o.toy_sample, "classify this sample of the toy set");
  infer->add_option("--per-class", o.per_class, "toy set samples per class");

  auto* exporter = app.add_subcommand("export-weights", "write seeded initial weights");
  add_common(exporter, o, shape);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (!shape.empty()) o.input_shape = parse_shape(shape);
    if (o.threads > 0) omp_set_num_threads(o.threads);
    if (*describe) return cmd_describe(o, std::cout);
    if (*analyze) return cmd_analyze(o, std::cout);
    if (*gradcheck) return cmd_gradcheck(o, std::cout);
    if (*train) return cmd_train_toy(o, std::cout);
    if (*infer) return cmd_infer(o, std::cout);
    return cmd_export_weights(o, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return kExitInvalid;
}
