#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spdnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Error taxonomy. All failures surface as exceptions rooted at spdnet::Error.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller handed us something malformed (shape mismatch, bad range, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A network/layer configuration that cannot be instantiated.
class InvalidSpec : public Error {
 public:
  using Error::Error;
};

/// Operation called in a state it does not support (e.g. backward w/o cache).
class InvalidState : public Error {
 public:
  using Error::Error;
};

/// An iterative numerical routine failed to produce a usable result.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Input left the mathematical domain of the requested function.
/// Carries the offending eigenvalue.
class DomainError : public Error {
 public:
  DomainError(const std::string& msg, double eigenvalue)
      : Error(msg), eigenvalue_(eigenvalue) {}
  double eigenvalue() const { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// Malformed on-disk data. Carries the byte position where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, std::uint64_t byte_offset)
      : Error(msg + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::uint64_t byte_offset() const { return byte_offset_; }

 private:
  std::uint64_t byte_offset_;
};

// ---------------------------------------------------------------------------
// Deterministic randomness. Distributions are implemented here rather than
// taken from <random> so that streams are bit-identical across standard
// library implementations.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from (seed, stream index) by running
/// splitmix64 twice over their mix. Used for per-point, per-epoch and
/// per-repeat substreams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
  splitmix64(s);
  return splitmix64(s);
}

/// splitmix64-seeded generator with hand-rolled uniform/gaussian draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // scramble so that small seeds do not produce correlated early output
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform on [0, 1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; second value of each pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n) via multiply-shift.
  std::uint64_t uniform_index(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates with Rng::uniform_index; deterministic across platforms.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(v[i - 1], v[j]);
  }
}

// ---------------------------------------------------------------------------

inline Matrix symmetrized(const Matrix& a) {
  return 0.5 * (a + a.transpose());
}

}  // namespace spdnet
