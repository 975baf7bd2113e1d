#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "spdnet/types.hpp"

namespace spdnet {

// ---------------------------------------------------------------------------
// Synthetic covariance-descriptor data. Each data point is one realization of
// a zero-mean locally stationary process: a sum of class-specific sinusoids,
// each amplitude-modulated by a slow AR(1) Gaussian envelope, over a white
// noise floor. The class identity lives entirely in the second-order
// statistics, which is what the covariance descriptor extracts. With the
// default near-unit envelope pole the modulation is slower than one
// realization, so each point carries its own frozen draw of per-tone powers.
// ---------------------------------------------------------------------------

/// Spectral identity of one class: carrier frequencies (cycles per sample)
/// with their amplitudes.
struct ClassSignature {
  std::vector<double> frequencies;
  std::vector<double> amplitudes;

  /// Default for class c of num_classes: a pair of tones whose positions
  /// step with the class index, 0.14 cycles apart. Class identity lives in
  /// the band positions; the per-point tone powers are random (the default
  /// envelope_rho freezes each envelope within a realization), so points of
  /// one class still scatter widely around their barycenter.
  static ClassSignature default_for(int c, int num_classes) {
    const double f1 = 0.12 + 0.18 * static_cast<double>(c) /
                                 static_cast<double>(num_classes);
    return ClassSignature{{f1, f1 + 0.14}, {2.5, 1.75}};
  }

  void validate() const {
    if (frequencies.size() != amplitudes.size()) {
      throw InvalidInput("ClassSignature: frequency/amplitude count mismatch");
    }
    for (double f : frequencies) {
      if (!(f > 0.0 && f < 0.5)) {
        throw InvalidInput("ClassSignature: frequency " + std::to_string(f) +
                           " outside (0, 0.5)");
      }
    }
    for (double a : amplitudes) {
      if (!(a >= 0.0)) throw InvalidInput("ClassSignature: negative amplitude");
    }
  }
};

struct GeneratorParams {
  int num_classes = 3;
  int points_per_class = 500;
  Eigen::Index window_len = 20;  // descriptor dimension n
  int windows_per_point = 64;    // series length = window_len * windows_per_point
  std::vector<ClassSignature> signatures;  // empty = default_for each class
  double envelope_rho = 0.9999;  // AR(1) pole of the amplitude envelopes
  double noise_floor = 1.8;      // white-noise standard deviation
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 1) throw InvalidInput("GeneratorParams: num_classes must be >= 1");
    if (points_per_class < 1) {
      throw InvalidInput("GeneratorParams: points_per_class must be >= 1");
    }
    if (window_len < 2) throw InvalidInput("GeneratorParams: window_len must be >= 2");
    if (windows_per_point < window_len) {
      throw InvalidInput("GeneratorParams: windows_per_point must be >= window_len");
    }
    if (!(envelope_rho >= 0.0 && envelope_rho < 1.0)) {
      throw InvalidInput("GeneratorParams: envelope_rho must lie in [0, 1)");
    }
    if (!(noise_floor >= 0.0)) throw InvalidInput("GeneratorParams: negative noise floor");
    if (!signatures.empty() &&
        signatures.size() != static_cast<std::size_t>(num_classes)) {
      throw InvalidInput("GeneratorParams: need one signature per class");
    }
    for (const auto& s : signatures) s.validate();
  }

  ClassSignature signature_for(int c) const {
    if (signatures.empty()) return ClassSignature::default_for(c, num_classes);
    return signatures[static_cast<std::size_t>(c)];
  }
};

/// One realization of the class process, seeded independently per point.
inline Vector generate_signal(const GeneratorParams& params, int class_idx,
                              std::uint64_t point_seed) {
  const ClassSignature sig = params.signature_for(class_idx);
  const Eigen::Index len = params.window_len * params.windows_per_point;
  const std::size_t tones = sig.frequencies.size();
  Rng rng(point_seed);

  std::vector<double> phase(tones);
  std::vector<double> env(tones);
  for (std::size_t k = 0; k < tones; ++k) phase[k] = 2.0 * M_PI * rng.uniform();
  for (std::size_t k = 0; k < tones; ++k) env[k] = rng.gaussian();

  const double rho = params.envelope_rho;
  const double drive = std::sqrt(1.0 - rho * rho);
  Vector x(len);
  for (Eigen::Index t = 0; t < len; ++t) {
    double v = 0.0;
    for (std::size_t k = 0; k < tones; ++k) {
      if (t > 0) env[k] = rho * env[k] + drive * rng.gaussian();
      v += sig.amplitudes[k] * env[k] *
           std::cos(2.0 * M_PI * sig.frequencies[k] * static_cast<double>(t) + phase[k]);
    }
    x(t) = v + params.noise_floor * rng.gaussian();
  }
  return x;
}

struct SignalSet {
  std::vector<Vector> series;
  std::vector<int> labels;
};

/// All points of all classes, class-major order; point i of class c uses the
/// derived seed of its global index, so generation order is immaterial.
inline SignalSet generate_signals(const GeneratorParams& params) {
  params.validate();
  SignalSet out;
  out.series.reserve(static_cast<std::size_t>(params.num_classes) *
                     static_cast<std::size_t>(params.points_per_class));
  out.labels.reserve(out.series.capacity());
  std::uint64_t index = 0;
  for (int c = 0; c < params.num_classes; ++c) {
    for (int i = 0; i < params.points_per_class; ++i, ++index) {
      out.series.push_back(generate_signal(params, c, derive_seed(params.seed, index)));
      out.labels.push_back(c);
    }
  }
  return out;
}

/// Sample covariance over the non-overlapping length-n windows of a series,
/// plus a trace-scaled ridge that keeps the estimate safely inside the SPD
/// cone. A series with no energy falls back to an absolute ridge so the
/// output is ridge * I rather than the zero matrix.
inline SPDMatrix covariance_descriptor(const Vector& series, Eigen::Index n) {
  if (n < 1) throw InvalidInput("covariance_descriptor: window length must be >= 1");
  if (series.size() < 2 * n) {
    throw InvalidInput("covariance_descriptor: series length " +
                       std::to_string(series.size()) + " shorter than two windows of " +
                       std::to_string(n));
  }
  const Eigen::Index m = series.size() / n;
  Matrix c = Matrix::Zero(n, n);
  for (Eigen::Index w = 0; w < m; ++w) {
    const Vector x = series.segment(w * n, n);
    c.noalias() += x * x.transpose();
  }
  c /= static_cast<double>(m);
  double ridge = 1e-6 * c.trace() / static_cast<double>(n);
  if (!(ridge > 0.0)) ridge = 1e-6;
  c += ridge * Matrix::Identity(n, n);
  return SPDMatrix(SymMatrix(c));
}

/// Full pipeline: signals -> covariance descriptors, labeled, class-major.
inline SPDBatch generate_descriptors(const GeneratorParams& params) {
  const SignalSet signals = generate_signals(params);
  SPDBatch batch;
  batch.items.reserve(signals.series.size());
  for (const Vector& s : signals.series) {
    batch.items.push_back(covariance_descriptor(s, params.window_len));
  }
  batch.labels = signals.labels;
  return batch;
}

// ---------------------------------------------------------------------------
// Deterministic stratified split.
// ---------------------------------------------------------------------------

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified assignment: per class, a seeded shuffle selects
/// round(train_fraction * count) items for the train side. Both sides keep
/// the original dataset order. Every class must land on both sides.
inline SplitIndices stratified_split_indices(const std::vector<int>& labels,
                                             double train_fraction,
                                             std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidInput("split: train_fraction must lie strictly between 0 and 1");
  }
  if (labels.empty()) throw InvalidInput("split: empty dataset");
  int num_classes = 0;
  for (int y : labels) {
    if (y < 0) throw InvalidInput("split: negative label");
    num_classes = std::max(num_classes, y + 1);
  }

  SplitIndices out;
  std::vector<char> to_train(labels.size(), 0);
  for (int c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    if (members.empty()) continue;
    const auto take = static_cast<std::size_t>(
        std::lround(train_fraction * static_cast<double>(members.size())));
    if (take == 0 || take == members.size()) {
      throw InvalidInput("split: fraction " + std::to_string(train_fraction) +
                         " leaves class " + std::to_string(c) +
                         " empty on one side");
    }
    // Two-level derivation keeps these streams disjoint from the per-point
    // generation streams even when both start from the same base seed.
    Rng rng(derive_seed(derive_seed(seed, 0x53504c4954ULL), static_cast<std::uint64_t>(c)));
    deterministic_shuffle(members, rng);
    for (std::size_t i = 0; i < take; ++i) to_train[members[i]] = 1;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (to_train[i] ? out.train : out.test).push_back(i);
  }
  return out;
}

inline SPDBatch take_subset(const SPDBatch& batch, const std::vector<std::size_t>& idx) {
  SPDBatch out;
  out.items.reserve(idx.size());
  if (batch.has_labels()) out.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    if (i >= batch.size()) throw InvalidInput("take_subset: index out of range");
    out.items.push_back(batch.items[i]);
    if (batch.has_labels()) out.labels.push_back(batch.labels[i]);
  }
  return out;
}

struct SplitResult {
  SPDBatch train;
  SPDBatch test;
  SplitIndices indices;
};

inline SplitResult split_dataset(const SPDBatch& batch, double train_fraction,
                                 std::uint64_t seed) {
  if (!batch.has_labels()) throw InvalidInput("split: dataset has no labels");
  SplitResult res;
  res.indices = stratified_split_indices(batch.labels, train_fraction, seed);
  res.train = take_subset(batch, res.indices.train);
  res.test = take_subset(batch, res.indices.test);
  return res;
}

}  // namespace spdnet
