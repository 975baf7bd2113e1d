#include "support/test_helpers.hpp"

#include <set>

#include "spdnet/common.hpp"

using namespace spdnet;

TEST_CASE("rng streams are deterministic and seed-sensitive") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(42);
  Rng d(43);
  int diff = 0;
  for (int i = 0; i < 16; ++i) diff += (c.next_u64() != d.next_u64());
  REQUIRE(diff == 16);
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
  Rng rng(7);
  double lo = 1.0;
  double hi = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  REQUIRE(lo < 0.01);
  REQUIRE(hi > 0.99);
}

TEST_CASE("gaussian draws have roughly standard moments") {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0;
  double sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sumsq += g * g;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("uniform_index is bounded and hits every bucket") {
  Rng rng(5);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = rng.uniform_index(7);
    REQUIRE(k < 7);
    counts[static_cast<std::size_t>(k)]++;
  }
  for (int c : counts) REQUIRE(c > 700);
}

TEST_CASE("derive_seed separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 50; ++s) {
    for (std::uint64_t stream = 0; stream < 50; ++stream) {
      seen.insert(derive_seed(s, stream));
    }
  }
  REQUIRE(seen.size() == 2500);
  REQUIRE(derive_seed(1, 2) != derive_seed(2, 1));
}

TEST_CASE("deterministic_shuffle permutes reproducibly") {
  std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> v2 = v1;
  Rng r1(99);
  Rng r2(99);
  deterministic_shuffle(v1, r1);
  deterministic_shuffle(v2, r2);
  REQUIRE(v1 == v2);

  std::vector<int> sorted = v1;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(sorted == std::vector<int>({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));

  std::vector<int> v3{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  Rng r3(100);
  deterministic_shuffle(v3, r3);
  REQUIRE(v3 != v1);
}

TEST_CASE("error taxonomy carries payloads") {
  const DomainError de("bad eigenvalue", -0.5);
  REQUIRE(de.eigenvalue() == -0.5);
  REQUIRE(std::string(de.what()).find("bad eigenvalue") != std::string::npos);

  const FormatError fe("short file", 123);
  REQUIRE(fe.byte_offset() == 123);
  REQUIRE(std::string(fe.what()).find("at byte 123") != std::string::npos);

  REQUIRE_THROWS_AS(throw InvalidInput("x"), Error);
  REQUIRE_THROWS_AS(throw NumericalFailure("x"), Error);
}

TEST_CASE("symmetrized averages the transpose") {
  Matrix a(2, 2);
  a << 1.0, 2.0, 4.0, 3.0;
  const Matrix s = symmetrized(a);
  REQUIRE(s(0, 1) == 3.0);
  REQUIRE(s(1, 0) == 3.0);
  REQUIRE(s(0, 0) == 1.0);
}
