#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "spdnet/dataset_io.hpp"
#include "spdnet/layers.hpp"

namespace spdnet {

// ---------------------------------------------------------------------------
// Training and evaluation drivers, the nearest-barycenter baseline, and the
// scarce-data sweep. All CSV output carries a versioned schema comment in the
// first row and prints doubles with 17 significant digits, so files from
// identical runs are byte-identical.
// ---------------------------------------------------------------------------

struct RunConfig {
  std::vector<Eigen::Index> dims = {20, 16, 8};  // input dim followed by block dims
  bool use_rbn = true;
  int epochs = 200;
  int batch_size = 30;
  double lr = 1e-2;
  double momentum = 0.9;
  double reeig_eps = 1e-4;
  int karcher_iters = 10;
  int rbn_unroll = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw InvalidInput("RunConfig: epochs must be >= 1");
    if (batch_size < 1) throw InvalidInput("RunConfig: batch_size must be >= 1");
    if (!(lr > 0.0)) throw InvalidInput("RunConfig: lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw InvalidInput("RunConfig: momentum must lie in [0, 1)");
    }
    if (karcher_iters < 1) throw InvalidInput("RunConfig: karcher_iters must be >= 1");
  }

  NetworkSpec network_spec(Eigen::Index input_dim, Eigen::Index num_classes) const {
    if (dims.empty() || dims.front() != input_dim) {
      throw InvalidSpec("architecture input dim " +
                        std::to_string(dims.empty() ? 0 : dims.front()) +
                        " does not match dataset dim " + std::to_string(input_dim));
    }
    NetworkSpec spec;
    spec.dims = dims;
    spec.num_classes = num_classes;
    spec.use_rbn = use_rbn;
    spec.reeig_eps = reeig_eps;
    spec.eta = 0.9;
    spec.karcher.max_iters = karcher_iters;
    spec.rbn_unroll = rbn_unroll;
    spec.validate();
    return spec;
  }
};

/// %.17g rendering, enough digits to reconstruct the exact double.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

struct EvalReport {
  std::vector<int> predictions;
  double accuracy = -1.0;  // negative when the data carries no labels
  Matrix confusion;        // row = true class, column = predicted class
};

/// Eval-mode predictions in chunks of chunk_size. The eval path uses only
/// running statistics, so the chunking cannot change any prediction.
inline EvalReport evaluate(Network& net, const SPDBatch& data, int chunk_size,
                           Eigen::Index num_classes) {
  if (chunk_size < 1) throw InvalidInput("evaluate: chunk_size must be >= 1");
  if (data.size() == 0) throw InvalidInput("evaluate: empty dataset");
  EvalReport report;
  report.predictions.reserve(data.size());
  for (std::size_t start = 0; start < data.size();
       start += static_cast<std::size_t>(chunk_size)) {
    const std::size_t stop =
        std::min(data.size(), start + static_cast<std::size_t>(chunk_size));
    SPDBatch chunk;
    chunk.items.assign(data.items.begin() + static_cast<std::ptrdiff_t>(start),
                       data.items.begin() + static_cast<std::ptrdiff_t>(stop));
    Network::ForwardCache cache = net.forward(chunk, {.training = false});
    for (int y : predict_labels(cache.logits)) report.predictions.push_back(y);
  }
  if (data.has_labels()) {
    report.confusion = Matrix::Zero(num_classes, num_classes);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const int truth = data.labels[i];
      const int pred = report.predictions[i];
      if (truth < 0 || truth >= num_classes) {
        throw InvalidInput("evaluate: label out of range");
      }
      report.confusion(truth, pred) += 1.0;
      hits += (pred == truth);
    }
    report.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainResult {
  Network net;
  std::vector<EpochMetrics> metrics;
};

inline std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::string csv = "# spdnet-metrics v1\nepoch,train_loss,train_acc,test_acc\n";
  for (const EpochMetrics& m : metrics) {
    csv += std::to_string(m.epoch) + "," + format_g17(m.train_loss) + "," +
           format_g17(m.train_acc) + "," + format_g17(m.test_acc) + "\n";
  }
  return csv;
}

/// SGD over shuffled mini-batches; the epoch permutation comes from a
/// per-epoch derived seed and the last short batch is kept. Stiefel steps for
/// BiMap weights, SPD geodesic steps for RBN biases, momentum SGD for the
/// head. Returns the trained network plus per-epoch metrics.
inline TrainResult train_network(const SPDBatch& train, const SPDBatch& test,
                                 Eigen::Index num_classes, const RunConfig& cfg,
                                 bool log_epochs = true) {
  cfg.validate();
  train.validate(static_cast<int>(num_classes));
  test.validate(static_cast<int>(num_classes));
  if (!train.has_labels() || !test.has_labels()) {
    throw InvalidInput("train_network: both splits need labels");
  }

  TrainResult result{Network(cfg.network_spec(train.dim(), num_classes), cfg.seed), {}};
  Network& net = result.net;

  Matrix head_w_vel = Matrix::Zero(num_classes, net.spec().feature_dim());
  Vector head_b_vel = Vector::Zero(num_classes);

  const std::size_t n_train = train.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x9000000 + static_cast<std::uint64_t>(epoch)));
    deterministic_shuffle(order, shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n_train;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(n_train, start + static_cast<std::size_t>(cfg.batch_size));
      SPDBatch batch;
      batch.items.reserve(stop - start);
      batch.labels.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch.items.push_back(train.items[order[i]]);
        batch.labels.push_back(train.labels[order[i]]);
      }

      Network::ForwardCache cache = net.forward(batch, {.training = true});
      Network::Gradients grads = net.backward(cache);
      loss_sum += cache.loss * static_cast<double>(batch.size());

      for (Eigen::Index l = 0; l < net.depth(); ++l) {
        const std::size_t li = static_cast<std::size_t>(l);
        BiMapLayer& bm = net.bimap_layers()[li];
        bm.set_weight(stiefel_step(bm.weight(), grads.bimap_weight[li], cfg.lr));
        if (net.spec().use_rbn) {
          RBNLayer& rbn = net.rbn_layers()[li];
          rbn.set_bias(spd_step(rbn.bias(), grads.rbn_bias[li], cfg.lr));
        }
      }
      sgd_momentum_step(net.head().mutable_weight(), head_w_vel, grads.head_weight,
                        cfg.lr, cfg.momentum);
      sgd_momentum_step(net.head().mutable_bias(), head_b_vel, grads.head_bias,
                        cfg.lr, cfg.momentum);
    }

    if (log_epochs) {
      EpochMetrics m;
      m.epoch = epoch;
      m.train_loss = loss_sum / static_cast<double>(n_train);
      m.train_acc = evaluate(net, train, cfg.batch_size, num_classes).accuracy;
      m.test_acc = evaluate(net, test, cfg.batch_size, num_classes).accuracy;
      result.metrics.push_back(m);
    }
  }
  if (!log_epochs) {
    EpochMetrics m;
    m.epoch = cfg.epochs;
    m.train_acc = evaluate(net, train, cfg.batch_size, num_classes).accuracy;
    m.test_acc = evaluate(net, test, cfg.batch_size, num_classes).accuracy;
    result.metrics.push_back(m);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Nearest-barycenter baseline: one Karcher mean per class, classify by
// minimum geodesic distance. Ties resolve to the lowest class index.
// ---------------------------------------------------------------------------

class MRDRMClassifier {
 public:
  static MRDRMClassifier fit(const SPDBatch& train, Eigen::Index num_classes,
                             const KarcherConfig& karcher = {}) {
    train.validate(static_cast<int>(num_classes));
    if (!train.has_labels()) throw InvalidInput("MRDRM: training data has no labels");
    MRDRMClassifier clf;
    for (Eigen::Index c = 0; c < num_classes; ++c) {
      std::vector<SPDMatrix> members;
      for (std::size_t i = 0; i < train.size(); ++i) {
        if (train.labels[i] == c) members.push_back(train.items[i]);
      }
      if (members.empty()) {
        throw InvalidInput("MRDRM: class " + std::to_string(c) +
                           " has no training points");
      }
      clf.means_.push_back(karcher_mean(members, karcher).mean);
    }
    return clf;
  }

  const std::vector<SPDMatrix>& class_means() const { return means_; }

  int predict_one(const SPDMatrix& p) const {
    if (means_.empty()) throw InvalidState("MRDRM: classifier is not fitted");
    int best = 0;
    double best_d = airm_distance(p, means_[0]);
    for (std::size_t c = 1; c < means_.size(); ++c) {
      const double d = airm_distance(p, means_[c]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    return best;
  }

  EvalReport evaluate(const SPDBatch& data) const {
    if (data.size() == 0) throw InvalidInput("MRDRM: empty dataset");
    EvalReport report;
    report.predictions.reserve(data.size());
    for (const SPDMatrix& p : data.items) report.predictions.push_back(predict_one(p));
    if (data.has_labels()) {
      const auto c = static_cast<Eigen::Index>(means_.size());
      report.confusion = Matrix::Zero(c, c);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        report.confusion(data.labels[i], report.predictions[i]) += 1.0;
        hits += (report.predictions[i] == data.labels[i]);
      }
      report.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
    }
    return report;
  }

 private:
  std::vector<SPDMatrix> means_;
};

// ---------------------------------------------------------------------------
// Scarce-data sweep: for each train fraction and repeat, train all three
// models on a common stratified subsample and score them on the full test
// split. The subsample is shared across models so rows are comparable.
// ---------------------------------------------------------------------------

struct SweepRow {
  std::string model;  // "spdnet", "spdnetbn" or "mrdrm"
  double fraction = 1.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string csv = "# spdnet-sweep v1\nmodel,fraction,seed,accuracy\n";
  for (const SweepRow& r : rows) {
    csv += r.model + "," + format_g17(r.fraction) + "," + std::to_string(r.seed) + "," +
           format_g17(r.accuracy) + "\n";
  }
  return csv;
}

inline std::vector<SweepRow> run_sweep(const Dataset& ds, const RunConfig& base,
                                       const std::vector<double>& fractions,
                                       int repeats, bool verbose = false) {
  base.validate();
  if (fractions.empty()) throw InvalidInput("sweep: no fractions given");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw InvalidInput("sweep: fraction " + std::to_string(f) + " outside (0, 1]");
    }
  }
  if (repeats < 1) throw InvalidInput("sweep: repeats must be >= 1");

  std::vector<SweepRow> rows;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    const double fraction = fractions[fi];
    for (int r = 0; r < repeats; ++r) {
      const std::uint64_t run_tag = fi * 1024 + static_cast<std::uint64_t>(r);
      const SPDBatch sub =
          fraction == 1.0
              ? ds.train
              : split_dataset(ds.train, fraction,
                              derive_seed(base.seed, 0xB000000 + run_tag))
                    .train;

      for (int model = 0; model < 3; ++model) {
        SweepRow row;
        row.fraction = fraction;
        row.seed = derive_seed(base.seed, 0xC000000 + run_tag * 4 +
                                              static_cast<std::uint64_t>(model));
        if (model == 2) {
          row.model = "mrdrm";
          KarcherConfig kc;
          kc.max_iters = base.karcher_iters;
          row.accuracy = MRDRMClassifier::fit(sub, ds.num_classes, kc)
                             .evaluate(ds.test)
                             .accuracy;
        } else {
          RunConfig cfg = base;
          cfg.use_rbn = (model == 1);
          cfg.seed = row.seed;
          row.model = cfg.use_rbn ? "spdnetbn" : "spdnet";
          TrainResult res =
              train_network(sub, ds.test, ds.num_classes, cfg, /*log_epochs=*/false);
          row.accuracy = res.metrics.back().test_acc;
        }
        rows.push_back(row);
        if (verbose) {
          std::fprintf(stderr, "sweep: %-8s fraction %.3g repeat %d -> %.4f\n",
                       rows.back().model.c_str(), fraction, r, rows.back().accuracy);
        }
      }
    }
  }
  return rows;
}

}  // namespace spdnet
