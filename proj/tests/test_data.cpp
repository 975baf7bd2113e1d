#include "support/test_helpers.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "spdnet/data.hpp"
#include "spdnet/manifold.hpp"

using namespace spdnet;
using testutil::rel_err;

namespace {

// Power of the series at one frequency, via direct projection.
double tone_power(const Vector& x, double freq) {
  std::complex<double> acc(0.0, 0.0);
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    const double angle = -2.0 * M_PI * freq * static_cast<double>(t);
    acc += x(t) * std::complex<double>(std::cos(angle), std::sin(angle));
  }
  return std::norm(acc) / static_cast<double>(x.size());
}

GeneratorParams small_params() {
  GeneratorParams params;
  params.num_classes = 3;
  params.points_per_class = 20;
  params.window_len = 8;
  params.windows_per_point = 16;
  params.seed = 5;
  return params;
}

}  // namespace

TEST_CASE("default class signatures are valid and distinct") {
  GeneratorParams params;
  params.num_classes = 5;  // defaults must stay legal for more classes too
  REQUIRE_NOTHROW(params.validate());
  for (int c = 0; c < params.num_classes; ++c) {
    const ClassSignature sig = params.signature_for(c);
    REQUIRE_NOTHROW(sig.validate());
    REQUIRE(sig.frequencies.size() == 2);
    REQUIRE(sig.frequencies[1] > sig.frequencies[0]);
    if (c > 0) {
      const ClassSignature prev = params.signature_for(c - 1);
      REQUIRE(sig.frequencies[0] > prev.frequencies[0]);
    }
  }
}

TEST_CASE("generator parameter validation") {
  GeneratorParams p = small_params();
  REQUIRE_NOTHROW(p.validate());

  GeneratorParams bad = p;
  bad.num_classes = 0;
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
  bad = p;
  bad.points_per_class = 0;
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
  bad = p;
  bad.window_len = 1;
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
  bad = p;
  bad.windows_per_point = 4;  // fewer windows than the descriptor dimension
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
  bad = p;
  bad.envelope_rho = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
  bad = p;
  bad.noise_floor = -0.1;
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
  bad = p;
  bad.signatures = {ClassSignature{{0.2}, {1.0}}};  // one signature, three classes
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
  bad = p;
  bad.signatures = std::vector<ClassSignature>(3, ClassSignature{{0.7}, {1.0}});
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("signal realizations are seed-determined") {
  const GeneratorParams params = small_params();
  const Vector a = generate_signal(params, 0, 999);
  const Vector b = generate_signal(params, 0, 999);
  const Vector c = generate_signal(params, 0, 1000);
  REQUIRE(a.size() == params.window_len * params.windows_per_point);
  REQUIRE(a == b);
  REQUIRE(a != c);
}

TEST_CASE("signals concentrate power at their class frequencies") {
  GeneratorParams params = small_params();
  params.windows_per_point = 160;  // longer series sharpens the spectrum
  params.noise_floor = 0.1;
  const ClassSignature sig = params.signature_for(1);  // tones at 0.18 and 0.32

  double on = 0.0;
  double off = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    const Vector x = generate_signal(params, 1, derive_seed(7, rep));
    on += tone_power(x, sig.frequencies[0]);
    off += tone_power(x, 0.25);  // between the tones, outside both linewidths
  }
  REQUIRE(on > 5.0 * off);
}

TEST_CASE("signal batch is class-major with per-point variation") {
  const GeneratorParams params = small_params();
  const SignalSet set = generate_signals(params);
  REQUIRE(set.series.size() == 60);
  REQUIRE(set.labels.size() == 60);
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    REQUIRE(set.labels[i] == static_cast<int>(i) / params.points_per_class);
  }
  REQUIRE(set.series[0] != set.series[1]);

  // the full run is reproducible
  const SignalSet again = generate_signals(params);
  for (std::size_t i = 0; i < set.series.size(); ++i) {
    REQUIRE(set.series[i] == again.series[i]);
  }
}

TEST_CASE("covariance descriptor of white noise approaches the identity") {
  Rng rng(61);
  const Eigen::Index n = 4;
  Vector x(n * 10000);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
  const SPDMatrix c = covariance_descriptor(x, n);
  REQUIRE(rel_err(c.mat(), Matrix::Identity(n, n)) < 0.05);
}

TEST_CASE("covariance descriptor scalar and degenerate cases") {
  Vector two(2);
  two << 3.0, 4.0;
  const SPDMatrix c1 = covariance_descriptor(two, 1);
  const double base = (9.0 + 16.0) / 2.0;
  REQUIRE_THAT(c1(0, 0), Catch::Matchers::WithinRel(base * (1.0 + 1e-6), 1e-12));

  // an all-zero series falls back to the absolute ridge
  const SPDMatrix cz = covariance_descriptor(Vector::Zero(12), 3);
  REQUIRE(rel_err(cz.mat(), 1e-6 * Matrix::Identity(3, 3)) < 1e-15);

  // a constant series gives a rank-one matrix; the ridge keeps it SPD
  const SPDMatrix cc = covariance_descriptor(Vector::Ones(12), 3);
  const Vector spec = sym_eig(cc.sym()).eigenvalues;
  REQUIRE(spec.minCoeff() > 0.0);
  REQUIRE_THAT(spec.maxCoeff(), Catch::Matchers::WithinRel(3.0, 1e-3));

  REQUIRE_THROWS_AS(covariance_descriptor(two, 0), InvalidInput);
  REQUIRE_THROWS_AS(covariance_descriptor(two, 2), InvalidInput);  // one window only
}

TEST_CASE("covariance descriptor ignores the leftover tail") {
  Rng rng(62);
  Vector x(11);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
  const SPDMatrix full = covariance_descriptor(x, 4);        // uses 8 samples
  const SPDMatrix trimmed = covariance_descriptor(x.head(8), 4);
  REQUIRE(full.mat() == trimmed.mat());
}

TEST_CASE("descriptor batch is SPD and labeled consistently") {
  const SPDBatch batch = generate_descriptors(small_params());
  REQUIRE(batch.size() == 60);
  REQUIRE_NOTHROW(batch.validate(3));
  for (const SPDMatrix& p : batch.items) {
    REQUIRE(p.dim() == 8);
    REQUIRE(sym_eig(p.sym()).eigenvalues.minCoeff() > 0.0);
  }
}

TEST_CASE("class means separate beyond the within-class scatter") {
  const GeneratorParams params;  // full default corpus, seed 0
  const SPDBatch batch = generate_descriptors(params);

  std::vector<SPDMatrix> means;
  double within = 0.0;
  for (int c = 0; c < params.num_classes; ++c) {
    std::vector<SPDMatrix> members;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch.labels[i] == c) members.push_back(batch.items[i]);
    }
    means.push_back(karcher_mean(members).mean);
    for (const SPDMatrix& p : members) {
      within += airm_distance(p, means.back());
    }
  }
  within /= static_cast<double>(batch.size());
  REQUIRE(within > 0.0);

  // every pair of class barycenters sits farther apart than the average
  // member-to-own-barycenter distance, so nearest-mean labeling is viable
  for (int a = 0; a < params.num_classes; ++a) {
    for (int b = a + 1; b < params.num_classes; ++b) {
      REQUIRE(airm_distance(means[a], means[b]) > within);
    }
  }
}

TEST_CASE("stratified split produces the pinned per-class counts") {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c) labels.insert(labels.end(), 500, c);

  const SplitIndices idx = stratified_split_indices(labels, 0.75, 9);
  REQUIRE(idx.train.size() == 3 * 375);
  REQUIRE(idx.test.size() == 3 * 125);

  const SplitIndices scarce = stratified_split_indices(labels, 0.1, 9);
  REQUIRE(scarce.train.size() == 3 * 50);

  // per-class counts are exact, not just in aggregate
  std::vector<int> per_class(3, 0);
  for (std::size_t i : idx.train) per_class[static_cast<std::size_t>(labels[i])]++;
  REQUIRE(per_class == std::vector<int>{375, 375, 375});
}

TEST_CASE("stratified split is deterministic, disjoint and order-preserving") {
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) labels.push_back(i % 4);

  const SplitIndices a = stratified_split_indices(labels, 0.5, 3);
  const SplitIndices b = stratified_split_indices(labels, 0.5, 3);
  REQUIRE(a.train == b.train);
  REQUIRE(a.test == b.test);
  REQUIRE(a.train != stratified_split_indices(labels, 0.5, 4).train);

  REQUIRE(std::is_sorted(a.train.begin(), a.train.end()));
  REQUIRE(std::is_sorted(a.test.begin(), a.test.end()));

  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(all[i] == i);
}

TEST_CASE("splits that would empty a side are rejected") {
  std::vector<int> labels{0, 0, 0, 0, 1, 1, 1, 1};
  REQUIRE_THROWS_AS(stratified_split_indices(labels, 0.05, 1), InvalidInput);
  REQUIRE_THROWS_AS(stratified_split_indices(labels, 0.99, 1), InvalidInput);
  REQUIRE_THROWS_AS(stratified_split_indices(labels, 0.0, 1), InvalidInput);
  REQUIRE_THROWS_AS(stratified_split_indices(labels, 1.0, 1), InvalidInput);
  REQUIRE_THROWS_AS(stratified_split_indices({}, 0.5, 1), InvalidInput);
  REQUIRE_THROWS_AS(stratified_split_indices({0, -1}, 0.5, 1), InvalidInput);
}

TEST_CASE("dataset split carries items and labels together") {
  const SPDBatch batch = generate_descriptors(small_params());
  const SplitResult split = split_dataset(batch, 0.75, 11);
  REQUIRE(split.train.size() == 45);
  REQUIRE(split.test.size() == 15);
  REQUIRE_NOTHROW(split.train.validate(3));
  REQUIRE_NOTHROW(split.test.validate(3));

  for (std::size_t k = 0; k < split.train.size(); ++k) {
    const std::size_t src = split.indices.train[k];
    REQUIRE(split.train.items[k].mat() == batch.items[src].mat());
    REQUIRE(split.train.labels[k] == batch.labels[src]);
  }

  SPDBatch unlabeled;
  unlabeled.items = batch.items;
  REQUIRE_THROWS_AS(split_dataset(unlabeled, 0.75, 11), InvalidInput);

  REQUIRE_THROWS_AS(take_subset(batch, {batch.size()}), InvalidInput);
}
