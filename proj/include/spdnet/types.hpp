#pragma once

#include <cassert>
#include <utility>
#include <vector>

#include "spdnet/common.hpp"

namespace spdnet {

/// Symmetric n x n matrix. Construction symmetrizes as (A + A^T)/2, which
/// kills drift from accumulated floating-point asymmetry; for an input that
/// is already bit-symmetric the operation is exact.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(const Matrix& a) {
    if (a.rows() != a.cols() || a.rows() < 1) {
      throw InvalidInput("SymMatrix: expected a non-empty square matrix, got " +
                         std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    }
    m_ = symmetrized(a);
  }

  static SymMatrix Zero(Eigen::Index n) { return SymMatrix(Matrix::Zero(n, n)); }
  static SymMatrix Identity(Eigen::Index n) { return SymMatrix(Matrix::Identity(n, n)); }

  const Matrix& mat() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

namespace detail {
inline bool weakly_positive_definite(const Matrix& m) {
  // Debug tripwire only: flags clearly indefinite matrices while tolerating
  // eigenvalues at roundoff distance from zero.
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return false;
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues()(0) > -1e-9 * scale;
}
}  // namespace detail

/// Symmetric positive definite matrix, the data token of the network.
/// Definiteness is an invariant of the operations that produce these values;
/// the constructor verifies it in debug builds only.
class SPDMatrix {
 public:
  SPDMatrix() = default;

  explicit SPDMatrix(const Matrix& a) : s_(a) {
    assert(detail::weakly_positive_definite(s_.mat()));
  }
  explicit SPDMatrix(SymMatrix s) : s_(std::move(s)) {
    assert(detail::weakly_positive_definite(s_.mat()));
  }

  static SPDMatrix Identity(Eigen::Index n) {
    return SPDMatrix(Matrix::Identity(n, n));
  }

  const Matrix& mat() const { return s_.mat(); }
  const SymMatrix& sym() const { return s_; }
  Eigen::Index dim() const { return s_.dim(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return s_(i, j); }

 private:
  SymMatrix s_;
};

/// Ordered batch of equally sized SPD matrices with optional class labels.
struct SPDBatch {
  std::vector<SPDMatrix> items;
  std::vector<int> labels;  // empty, or one label per item in [0, C)

  std::size_t size() const { return items.size(); }
  Eigen::Index dim() const { return items.empty() ? 0 : items.front().dim(); }
  bool has_labels() const { return !labels.empty(); }

  void validate(int num_classes = -1) const {
    if (items.empty()) throw InvalidInput("SPDBatch: batch is empty");
    const Eigen::Index n = items.front().dim();
    for (const auto& p : items) {
      if (p.dim() != n) throw InvalidInput("SPDBatch: items have mixed dimensions");
    }
    if (!labels.empty()) {
      if (labels.size() != items.size()) {
        throw InvalidInput("SPDBatch: label count does not match item count");
      }
      for (int y : labels) {
        if (y < 0 || (num_classes >= 0 && y >= num_classes)) {
          throw InvalidInput("SPDBatch: label " + std::to_string(y) + " out of range");
        }
      }
    }
  }
};

}  // namespace spdnet
