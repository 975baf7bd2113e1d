// Command-line front end: dataset generation, training, evaluation, the
// nearest-barycenter baseline and scarce-data sweeps.
//
// Exit codes: 0 success, 1 usage error (bad flags, malformed config,
// mismatched shapes), 2 runtime or numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spdnet/checkpoint.hpp"
#include "spdnet/dataset_io.hpp"
#include "spdnet/train.hpp"

namespace {

namespace fs = std::filesystem;

struct GenerateArgs {
  std::string out;
  spdnet::GeneratorParams params;
  double train_fraction = 0.75;
};

struct TrainArgs {
  std::string dataset;
  std::string out;
  spdnet::RunConfig cfg;
};

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::string out;
  int batch_size = 30;
};

struct BaselineArgs {
  std::string dataset;
  std::string out;
  int karcher_iters = 10;
};

struct SweepArgs {
  std::string dataset;
  std::string out;
  spdnet::RunConfig cfg;
  std::vector<double> fractions = {0.1, 0.5, 1.0};
  int repeats = 5;
};

std::string report_text(const spdnet::EvalReport& report, const std::string& split,
                        std::size_t items) {
  std::string text = "split " + split + "\n";
  text += "items " + std::to_string(items) + "\n";
  text += "accuracy " + spdnet::format_g17(report.accuracy) + "\n";
  text += "confusion_matrix rows=true cols=predicted\n";
  for (Eigen::Index i = 0; i < report.confusion.rows(); ++i) {
    for (Eigen::Index j = 0; j < report.confusion.cols(); ++j) {
      if (j) text += " ";
      text += std::to_string(static_cast<long long>(report.confusion(i, j)));
    }
    text += "\n";
  }
  return text;
}

void emit_report(const std::string& text, const std::string& out_path) {
  std::fputs(text.c_str(), stdout);
  if (!out_path.empty()) spdnet::write_file_bytes(out_path, text);
}

int cmd_generate(const GenerateArgs& args) {
  spdnet::GeneratorParams params = args.params;
  params.validate();
  if (!(args.train_fraction > 0.0 && args.train_fraction < 1.0)) {
    throw spdnet::InvalidInput("generate: --train-fraction must lie in (0, 1)");
  }

  const spdnet::SPDBatch all = spdnet::generate_descriptors(params);
  const spdnet::SplitResult split =
      spdnet::split_dataset(all, args.train_fraction, params.seed);

  spdnet::Dataset ds;
  ds.dim = params.window_len;
  ds.num_classes = params.num_classes;
  ds.train = split.train;
  ds.test = split.test;
  ds.generator = {
      {"num_classes", params.num_classes},
      {"points_per_class", params.points_per_class},
      {"window_len", params.window_len},
      {"windows_per_point", params.windows_per_point},
      {"envelope_rho", params.envelope_rho},
      {"noise_floor", params.noise_floor},
      {"seed", params.seed},
      {"train_fraction", args.train_fraction},
  };
  {
    nlohmann::json sigs = nlohmann::json::array();
    for (int c = 0; c < params.num_classes; ++c) {
      const spdnet::ClassSignature sig = params.signature_for(c);
      sigs.push_back({{"frequencies", sig.frequencies}, {"amplitudes", sig.amplitudes}});
    }
    ds.generator["signatures"] = sigs;
  }
  spdnet::save_dataset(ds, args.out);

  std::printf("dataset %s: dim %lld, %d classes\n", args.out.c_str(),
              static_cast<long long>(ds.dim), ds.num_classes);
  for (int c = 0; c < params.num_classes; ++c) {
    std::size_t tr = 0;
    std::size_t te = 0;
    for (int y : ds.train.labels) tr += (y == c);
    for (int y : ds.test.labels) te += (y == c);
    std::printf("class %d: %zu train, %zu test\n", c, tr, te);
  }
  return 0;
}

int cmd_train(const TrainArgs& args) {
  const spdnet::Dataset ds = spdnet::load_dataset(args.dataset);
  spdnet::TrainResult result =
      spdnet::train_network(ds.train, ds.test, ds.num_classes, args.cfg);

  fs::create_directories(args.out);
  spdnet::write_file_bytes((fs::path(args.out) / "metrics.csv").string(),
                           spdnet::metrics_csv(result.metrics));
  spdnet::CheckpointMeta meta;
  meta.seed = args.cfg.seed;
  meta.epoch = args.cfg.epochs;
  meta.lr = args.cfg.lr;
  meta.momentum = args.cfg.momentum;
  spdnet::save_checkpoint((fs::path(args.out) / "checkpoint.spdc").string(),
                          result.net, meta);

  const spdnet::EpochMetrics& last = result.metrics.back();
  std::printf("trained %d epochs: train_loss %s, train_acc %s, test_acc %s\n",
              last.epoch, spdnet::format_g17(last.train_loss).c_str(),
              spdnet::format_g17(last.train_acc).c_str(),
              spdnet::format_g17(last.test_acc).c_str());
  return 0;
}

int cmd_eval(const EvalArgs& args) {
  if (args.split != "train" && args.split != "test") {
    throw spdnet::InvalidInput("eval: --split must be 'train' or 'test'");
  }
  spdnet::LoadedCheckpoint ckpt = spdnet::load_checkpoint(args.checkpoint);
  const spdnet::Dataset ds = spdnet::load_dataset(args.dataset);
  const spdnet::SPDBatch& data = args.split == "train" ? ds.train : ds.test;
  if (ds.dim != ckpt.net.spec().dims.front()) {
    throw spdnet::InvalidInput("eval: checkpoint expects dim " +
                               std::to_string(ckpt.net.spec().dims.front()) +
                               ", dataset has dim " + std::to_string(ds.dim));
  }
  const spdnet::EvalReport report =
      spdnet::evaluate(ckpt.net, data, args.batch_size, ds.num_classes);
  emit_report(report_text(report, args.split, data.size()), args.out);
  return 0;
}

int cmd_baseline(const BaselineArgs& args) {
  const spdnet::Dataset ds = spdnet::load_dataset(args.dataset);
  spdnet::KarcherConfig kc;
  kc.max_iters = args.karcher_iters;
  const auto clf = spdnet::MRDRMClassifier::fit(ds.train, ds.num_classes, kc);
  const spdnet::EvalReport report = clf.evaluate(ds.test);
  emit_report(report_text(report, "test", ds.test.size()), args.out);
  return 0;
}

int cmd_sweep(const SweepArgs& args) {
  const spdnet::Dataset ds = spdnet::load_dataset(args.dataset);
  const std::vector<spdnet::SweepRow> rows =
      spdnet::run_sweep(ds, args.cfg, args.fractions, args.repeats, /*verbose=*/true);
  fs::create_directories(args.out);
  spdnet::write_file_bytes((fs::path(args.out) / "sweep.csv").string(),
                           spdnet::sweep_csv(rows));
  std::printf("sweep: %zu rows -> %s/sweep.csv\n", rows.size(), args.out.c_str());
  return 0;
}

void add_run_config_options(CLI::App* cmd, spdnet::RunConfig& cfg, bool with_rbn_flag) {
  cmd->add_option("--dims", cfg.dims, "architecture dims, input first")
      ->delimiter(',');
  if (with_rbn_flag) {
    cmd->add_flag("--rbn,!--no-rbn", cfg.use_rbn, "batch normalization after each BiMap");
  }
  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--batch-size", cfg.batch_size, "mini-batch size");
  cmd->add_option("--lr", cfg.lr, "learning rate");
  cmd->add_option("--momentum", cfg.momentum, "SGD momentum (head parameters)");
  cmd->add_option("--eps-reeig", cfg.reeig_eps, "eigenvalue rectification threshold");
  cmd->add_option("--karcher-iters", cfg.karcher_iters, "max Karcher flow iterations");
  cmd->add_option("--karcher-unroll", cfg.rbn_unroll,
                  "backprop through the last k Karcher iterations (0 or 1)");
  cmd->add_option("--seed", cfg.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural networks over SPD matrices with Riemannian batch normalization"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "generate a synthetic dataset");
  generate->add_option("--out", gen.out, "output dataset directory")->required();
  generate->add_option("--seed", gen.params.seed, "random seed");
  generate->add_option("--classes", gen.params.num_classes, "number of classes");
  generate->add_option("--points", gen.params.points_per_class, "points per class");
  generate->add_option("--window-len", gen.params.window_len,
                       "window length (descriptor dimension)");
  generate->add_option("--windows", gen.params.windows_per_point, "windows per point");
  generate->add_option("--noise-floor", gen.params.noise_floor,
                       "white noise standard deviation");
  generate->add_option("--rho", gen.params.envelope_rho, "AR(1) envelope pole");
  generate->add_option("--train-fraction", gen.train_fraction, "train split fraction");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "train a network");
  train->add_option("--dataset", tr.dataset, "dataset directory")->required();
  train->add_option("--out", tr.out, "output directory for checkpoint and metrics")
      ->required();
  add_run_config_options(train, tr.cfg, /*with_rbn_flag=*/true);

  EvalArgs ev;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", ev.checkpoint, "checkpoint file")->required();
  eval->add_option("--dataset", ev.dataset, "dataset directory")->required();
  eval->add_option("--split", ev.split, "dataset split to score (train|test)");
  eval->add_option("--batch-size", ev.batch_size, "evaluation chunk size");
  eval->add_option("--out", ev.out, "also write the report to this file");

  BaselineArgs bl;
  CLI::App* baseline =
      app.add_subcommand("baseline", "nearest-barycenter baseline (MRDRM)");
  baseline->add_option("--dataset", bl.dataset, "dataset directory")->required();
  baseline->add_option("--karcher-iters", bl.karcher_iters, "max Karcher flow iterations");
  baseline->add_option("--out", bl.out, "also write the report to this file");

  SweepArgs sw;
  CLI::App* sweep =
      app.add_subcommand("sweep", "accuracy vs train fraction for all models");
  sweep->add_option("--dataset", sw.dataset, "dataset directory")->required();
  sweep->add_option("--out", sw.out, "output directory for sweep.csv")->required();
  sweep->add_option("--fractions", sw.fractions, "train fractions in (0, 1]")
      ->delimiter(',');
  sweep->add_option("--repeats", sw.repeats, "repeats per fraction");
  add_run_config_options(sweep, sw.cfg, /*with_rbn_flag=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen);
    if (train->parsed()) return cmd_train(tr);
    if (eval->parsed()) return cmd_eval(ev);
    if (baseline->parsed()) return cmd_baseline(bl);
    if (sweep->parsed()) return cmd_sweep(sw);
  } catch (const spdnet::InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const spdnet::InvalidSpec& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const spdnet::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
