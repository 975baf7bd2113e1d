#pragma once

#include "spdnet/manifold.hpp"

namespace spdnet {

// ---------------------------------------------------------------------------
// Manifold-constrained parameter updates. BiMap weights live on the Stiefel
// manifold (orthonormal columns), RBN biases on the SPD manifold; the dense
// head is plain Euclidean SGD with momentum.
// ---------------------------------------------------------------------------

/// Orthonormal factor of the thin QR decomposition, with the sign of each
/// column fixed so the corresponding R diagonal entry is positive.
inline Matrix qr_orthonormal_factor(const Matrix& a) {
  if (a.rows() < a.cols() || a.cols() < 1) {
    throw InvalidInput("qr_orthonormal_factor: need rows >= cols >= 1");
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  const Matrix r = qr.matrixQR().topRows(a.cols());
  const double scale = std::max(1.0, a.norm());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (std::abs(r(j, j)) < 1e-13 * scale) {
      throw NumericalFailure("qr_orthonormal_factor: rank-deficient input");
    }
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

/// Semi-orthogonal matrix from the QR factor of a seeded Gaussian draw.
inline Matrix random_semi_orthogonal(Eigen::Index rows, Eigen::Index cols,
                                     std::uint64_t seed) {
  Rng rng(seed);
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = rng.gaussian();
  }
  return qr_orthonormal_factor(a);
}

/// One SPD-manifold descent step: project the Euclidean gradient to the
/// tangent space at G via G sym(dG) G, then follow the geodesic emanating
/// from G in the negative gradient direction.
inline SPDMatrix spd_step(const SPDMatrix& g, const Matrix& euclid_grad, double lr) {
  if (euclid_grad.rows() != g.dim() || euclid_grad.cols() != g.dim()) {
    throw InvalidInput("spd_step: gradient shape mismatch");
  }
  if (!euclid_grad.allFinite()) throw InvalidInput("spd_step: non-finite gradient");
  const Matrix riem = g.mat() * symmetrized(euclid_grad) * g.mat();
  return exp_map(g, SymMatrix(-lr * riem));
}

/// One Stiefel descent step: tangent projection xi = dW - W sym(W^T dW),
/// followed by the thin-QR retraction of W - lr * xi.
inline Matrix stiefel_step(const Matrix& w, const Matrix& euclid_grad, double lr) {
  if (euclid_grad.rows() != w.rows() || euclid_grad.cols() != w.cols()) {
    throw InvalidInput("stiefel_step: gradient shape mismatch");
  }
  const Matrix wtg = w.transpose() * euclid_grad;
  const Matrix xi = euclid_grad - w * symmetrized(wtg);
  return qr_orthonormal_factor(w - lr * xi);
}

/// Euclidean SGD with momentum: v' = m v + g, p' = p - lr v'.
inline void sgd_momentum_step(Matrix& param, Matrix& velocity, const Matrix& grad,
                              double lr, double momentum) {
  velocity = momentum * velocity + grad;
  param -= lr * velocity;
}

inline void sgd_momentum_step(Vector& param, Vector& velocity, const Vector& grad,
                              double lr, double momentum) {
  velocity = momentum * velocity + grad;
  param -= lr * velocity;
}

struct OptimConfig {
  double lr = 1e-2;
  double euclid_momentum = 0.9;  // applied to the dense head only

  void validate() const {
    if (!(lr > 0.0)) throw InvalidInput("OptimConfig: lr must be positive");
    if (!(euclid_momentum >= 0.0 && euclid_momentum < 1.0)) {
      throw InvalidInput("OptimConfig: momentum must lie in [0, 1)");
    }
  }
};

}  // namespace spdnet
