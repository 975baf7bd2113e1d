#pragma once

#include <cstddef>
#include <vector>

#include "spdnet/symfun.hpp"

namespace spdnet {

// ---------------------------------------------------------------------------
// Riemannian geometry of the SPD manifold under the affine-invariant metric.
// ---------------------------------------------------------------------------

namespace detail {
inline void check_same_dims(const SPDMatrix& a, const SPDMatrix& b, const char* where) {
  if (a.dim() != b.dim()) {
    throw InvalidInput(std::string(where) + ": dimension mismatch (" +
                       std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  }
}
}  // namespace detail

/// Geodesic distance d(P1, P2) = 1/2 ||log(P1^{-1/2} P2 P1^{-1/2})||_F.
/// The 1/2 prefactor is part of this metric's convention here; every
/// downstream use (nearest-mean classification, inertia) is invariant to
/// positive rescaling.
inline double airm_distance(const SPDMatrix& p1, const SPDMatrix& p2) {
  detail::check_same_dims(p1, p2, "airm_distance");
  const SpdSqrtPair r1 = spd_sqrt_pair(p1);
  const SymMatrix inner(r1.invsqrt.mat() * p2.mat() * r1.invsqrt.mat());
  const EigDecomposition eig = sym_eig(inner);
  detail::check_spectrum_domain(ScalarFun::log(), eig.eigenvalues);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues.size(); ++i) {
    const double l = std::log(eig.eigenvalues(i));
    sq += l * l;
  }
  return 0.5 * std::sqrt(sq);
}

/// Exponential mapping at P0: S in the tangent space at P0 to a manifold
/// point, P0^{1/2} exp(P0^{-1/2} S P0^{-1/2}) P0^{1/2}.
inline SPDMatrix exp_map(const SPDMatrix& p0, const SymMatrix& s) {
  if (p0.dim() != s.dim()) throw InvalidInput("exp_map: dimension mismatch");
  const SpdSqrtPair r = spd_sqrt_pair(p0);
  const SymMatrix inner(r.invsqrt.mat() * s.mat() * r.invsqrt.mat());
  const SymMatrix e = spd_fun(inner, ScalarFun::exp());
  return SPDMatrix(SymMatrix(r.sqrt.mat() * e.mat() * r.sqrt.mat()));
}

/// Logarithmic mapping at P0, the inverse of exp_map:
/// P0^{1/2} log(P0^{-1/2} P P0^{-1/2}) P0^{1/2}.
inline SymMatrix log_map(const SPDMatrix& p0, const SPDMatrix& p) {
  detail::check_same_dims(p0, p, "log_map");
  const SpdSqrtPair r = spd_sqrt_pair(p0);
  const SymMatrix inner(r.invsqrt.mat() * p.mat() * r.invsqrt.mat());
  const SymMatrix l = spd_fun(inner, ScalarFun::log());
  return SymMatrix(r.sqrt.mat() * l.mat() * r.sqrt.mat());
}

/// Point on the geodesic between P1 and P2: the two-point weighted barycenter
/// P2^{1/2} (P2^{-1/2} P1 P2^{-1/2})^w P2^{1/2}, with weight w on P1
/// (w = 1 returns P1, w = 0 returns P2). Only convex weights are accepted.
inline SPDMatrix geodesic_barycenter2(const SPDMatrix& p1, const SPDMatrix& p2, double w) {
  detail::check_same_dims(p1, p2, "geodesic_barycenter2");
  if (!(w >= 0.0 && w <= 1.0)) {
    throw InvalidInput("geodesic_barycenter2: weight " + std::to_string(w) +
                       " outside [0, 1]");
  }
  const SpdSqrtPair r = spd_sqrt_pair(p2);
  const SymMatrix inner(r.invsqrt.mat() * p1.mat() * r.invsqrt.mat());
  const SymMatrix pw = spd_fun(inner, ScalarFun::power(w));
  return SPDMatrix(SymMatrix(r.sqrt.mat() * pw.mat() * r.sqrt.mat()));
}

/// Convex weight vector: nonnegative entries summing to one (within 1e-12).
class WeightVector {
 public:
  explicit WeightVector(Vector w) : w_(std::move(w)) {
    if (w_.size() < 1) throw InvalidInput("WeightVector: empty");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < w_.size(); ++i) {
      if (w_(i) < 0.0) throw InvalidInput("WeightVector: negative weight");
      sum += w_(i);
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      throw InvalidInput("WeightVector: weights sum to " + std::to_string(sum) +
                         ", expected 1");
    }
  }

  static WeightVector uniform(std::size_t n) {
    if (n == 0) throw InvalidInput("WeightVector::uniform: empty");
    return WeightVector(Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / double(n)));
  }

  const Vector& values() const { return w_; }
  std::size_t size() const { return static_cast<std::size_t>(w_.size()); }
  double operator[](std::size_t i) const { return w_(static_cast<Eigen::Index>(i)); }

 private:
  Vector w_;
};

/// Iteration controls for the Karcher flow.
struct KarcherConfig {
  enum class Init { ArithmeticMean, FirstElement };

  int max_iters = 10;
  double step_tol = 1e-6;  // on the Frobenius norm of the tangent-space mean
  Init init = Init::ArithmeticMean;
  bool record_inertia = false;

  void validate() const {
    if (max_iters < 1) throw InvalidInput("KarcherConfig: max_iters must be >= 1");
    if (!(step_tol > 0.0)) throw InvalidInput("KarcherConfig: step_tol must be > 0");
  }
};

struct KarcherResult {
  SPDMatrix mean;
  bool converged = false;
  int iterations = 0;
  std::vector<double> inertia;  // weighted sum of squared distances, per visited iterate
};

/// Weighted Frechet mean by the Karcher flow: log-map the points at the
/// current estimate, average in tangent space (fixed summation order, unit
/// step), exp-map back; stop once the tangent mean satisfies
/// ||T||_F < step_tol * (1 + ||G||_F). Non-convergence is reported through
/// the flag, not an error.
inline KarcherResult karcher_mean(const std::vector<SPDMatrix>& items,
                                  const WeightVector& weights,
                                  const KarcherConfig& cfg = {}) {
  cfg.validate();
  if (items.empty()) throw InvalidInput("karcher_mean: empty batch");
  if (weights.size() != items.size()) {
    throw InvalidInput("karcher_mean: weight count does not match batch size");
  }
  const Eigen::Index n = items.front().dim();
  for (const auto& p : items) {
    if (p.dim() != n) throw InvalidInput("karcher_mean: items have mixed dimensions");
  }

  Matrix g;
  if (cfg.init == KarcherConfig::Init::FirstElement) {
    g = items.front().mat();
  } else {
    g = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < items.size(); ++i) g += weights[i] * items[i].mat();
  }

  KarcherResult result;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const SpdSqrtPair r = spd_sqrt_pair(SPDMatrix(SymMatrix(g)));

    // Tangent mean expressed at the identity: A = sum_i w_i log(G^-1/2 P_i G^-1/2).
    Matrix a = Matrix::Zero(n, n);
    double inertia = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const SymMatrix inner(r.invsqrt.mat() * items[i].mat() * r.invsqrt.mat());
      const EigDecomposition eig = sym_eig(inner);
      detail::check_spectrum_domain(ScalarFun::log(), eig.eigenvalues);
      a += weights[i] * spd_fun(eig, ScalarFun::log()).mat();
      if (cfg.record_inertia) {
        double sq = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double l = std::log(eig.eigenvalues(k));
          sq += l * l;
        }
        inertia += weights[i] * 0.25 * sq;
      }
    }
    if (cfg.record_inertia) result.inertia.push_back(inertia);

    // ||T||_F for T = G^{1/2} A G^{1/2}, the tangent mean at G.
    const Matrix tangent = r.sqrt.mat() * symmetrized(a) * r.sqrt.mat();
    result.iterations = it;
    if (tangent.norm() < cfg.step_tol * (1.0 + g.norm())) {
      result.converged = true;
      break;
    }
    const SymMatrix e = spd_fun(SymMatrix(a), ScalarFun::exp());
    g = symmetrized(r.sqrt.mat() * e.mat() * r.sqrt.mat());
  }
  result.mean = SPDMatrix(SymMatrix(g));
  return result;
}

inline KarcherResult karcher_mean(const std::vector<SPDMatrix>& items,
                                  const KarcherConfig& cfg = {}) {
  return karcher_mean(items, WeightVector::uniform(items.size()), cfg);
}

/// Parallel transport of the tangent vector S from P1 to P2. The transporter
/// E with E E = P2 P1^{-1} is computed through symmetric decompositions only,
/// E = P1^{1/2} (P1^{-1/2} P2 P1^{-1/2})^{1/2} P1^{-1/2}, and applied as the
/// congruence E S E^T. Transporting an SPD point (rather than a tangent
/// vector) uses the same congruence and stays SPD.
inline SymMatrix parallel_transport(const SPDMatrix& p1, const SPDMatrix& p2,
                                    const SymMatrix& s) {
  detail::check_same_dims(p1, p2, "parallel_transport");
  if (s.dim() != p1.dim()) throw InvalidInput("parallel_transport: vector dimension mismatch");
  const SpdSqrtPair r1 = spd_sqrt_pair(p1);
  const SymMatrix inner(r1.invsqrt.mat() * p2.mat() * r1.invsqrt.mat());
  const SymMatrix inner_sqrt = spd_fun(inner, ScalarFun::sqrt());
  const Matrix e = r1.sqrt.mat() * inner_sqrt.mat() * r1.invsqrt.mat();
  return SymMatrix(e * s.mat() * e.transpose());
}

inline SPDMatrix parallel_transport(const SPDMatrix& p1, const SPDMatrix& p2,
                                    const SPDMatrix& point) {
  return SPDMatrix(parallel_transport(p1, p2, point.sym()));
}

/// Log-density of the maximum-entropy distribution on SPD matrices with
/// Riemannian mean `mean`, up to its normalization constant:
/// log det(alpha mean^{-1}) - tr(alpha mean^{-1} P), alpha = (n + 1)/2.
inline double spd_log_density(const SPDMatrix& p, const SPDMatrix& mean) {
  detail::check_same_dims(p, mean, "spd_log_density");
  const Eigen::Index n = p.dim();
  const double alpha = 0.5 * double(n + 1);
  const EigDecomposition eig = sym_eig(mean);
  detail::check_spectrum_domain(ScalarFun::log(), eig.eigenvalues);
  double log_det = double(n) * std::log(alpha);
  for (Eigen::Index i = 0; i < n; ++i) log_det -= std::log(eig.eigenvalues(i));
  const SymMatrix mean_inv = spd_fun(eig, ScalarFun::power(-1.0));
  const double tr = alpha * (mean_inv.mat() * p.mat()).trace();
  return log_det - tr;
}

}  // namespace spdnet
