#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "spdnet/types.hpp"

namespace spdnet {

/// Relative tolerance deciding when two eigenvalues are treated as equal in
/// the divided-difference matrix. Sits below eigensolver accuracy; for smooth
/// functions the derivative branch is the continuous limit of the quotient.
inline constexpr double kLoewnerPairTol = 1e-8;

/// Scalar function applied to a spectrum, together with its derivative.
/// sqrt/invsqrt/log/power require a strictly positive argument; exp accepts
/// any real (so tangent vectors can be exponentiated); rect is the eigenvalue
/// rectifier max(s, eps) with subgradient 0 at the threshold.
class ScalarFun {
 public:
  enum class Kind { Sqrt, InvSqrt, Log, Exp, Power, Rect };

  static ScalarFun sqrt() { return ScalarFun(Kind::Sqrt, 0.0); }
  static ScalarFun invsqrt() { return ScalarFun(Kind::InvSqrt, 0.0); }
  static ScalarFun log() { return ScalarFun(Kind::Log, 0.0); }
  static ScalarFun exp() { return ScalarFun(Kind::Exp, 0.0); }
  static ScalarFun power(double w) { return ScalarFun(Kind::Power, w); }
  static ScalarFun rect(double eps) {
    if (!(eps > 0.0)) throw InvalidInput("ScalarFun::rect: eps must be positive");
    return ScalarFun(Kind::Rect, eps);
  }

  double f(double s) const {
    switch (kind_) {
      case Kind::Sqrt: return std::sqrt(s);
      case Kind::InvSqrt: return 1.0 / std::sqrt(s);
      case Kind::Log: return std::log(s);
      case Kind::Exp: return std::exp(s);
      case Kind::Power: return std::pow(s, param_);
      case Kind::Rect: return std::max(s, param_);
    }
    return 0.0;
  }

  double df(double s) const {
    switch (kind_) {
      case Kind::Sqrt: return 0.5 / std::sqrt(s);
      case Kind::InvSqrt: return -0.5 / (s * std::sqrt(s));
      case Kind::Log: return 1.0 / s;
      case Kind::Exp: return std::exp(s);
      case Kind::Power: return param_ * std::pow(s, param_ - 1.0);
      case Kind::Rect: return s > param_ ? 1.0 : 0.0;
    }
    return 0.0;
  }

  /// True when the function is only defined on strictly positive arguments.
  bool needs_positive() const {
    return kind_ == Kind::Sqrt || kind_ == Kind::InvSqrt || kind_ == Kind::Log ||
           kind_ == Kind::Power;
  }

  Kind kind() const { return kind_; }
  double param() const { return param_; }

  const char* name() const {
    switch (kind_) {
      case Kind::Sqrt: return "sqrt";
      case Kind::InvSqrt: return "invsqrt";
      case Kind::Log: return "log";
      case Kind::Exp: return "exp";
      case Kind::Power: return "power";
      case Kind::Rect: return "rect";
    }
    return "?";
  }

 private:
  ScalarFun(Kind kind, double param) : kind_(kind), param_(param) {}

  Kind kind_;
  double param_;  // exponent for Power, threshold for Rect
};

/// Orthonormal eigenbasis (columns) and ascending eigenvalues of a symmetric
/// matrix. Backbone of every eigenvalue-based operation.
struct EigDecomposition {
  Matrix basis;
  Vector eigenvalues;

  Eigen::Index dim() const { return eigenvalues.size(); }
};

/// Symmetric eigendecomposition with a fixed sign convention (first nonzero
/// entry of each eigenvector positive), so repeated runs are bit-identical.
inline EigDecomposition sym_eig(const SymMatrix& s) {
  if (!s.mat().allFinite()) {
    throw InvalidInput("sym_eig: input has non-finite entries");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s.mat());
  if (solver.info() != Eigen::Success) {
    throw NumericalFailure("sym_eig: eigensolver failed to converge");
  }
  EigDecomposition d{solver.eigenvectors(), solver.eigenvalues()};
  const Eigen::Index n = d.dim();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = d.basis(i, j);
      if (v != 0.0) {
        if (v < 0.0) d.basis.col(j) = -d.basis.col(j);
        break;
      }
    }
  }
  return d;
}

inline EigDecomposition sym_eig(const SPDMatrix& p) { return sym_eig(p.sym()); }

namespace detail {
inline void check_spectrum_domain(const ScalarFun& fn, const Vector& sigma) {
  if (fn.needs_positive() && sigma(0) <= 0.0) {
    throw DomainError(std::string("spd_fun: eigenvalue ") + std::to_string(sigma(0)) +
                          " outside the domain of " + fn.name(),
                      sigma(0));
  }
}
}  // namespace detail

/// Matrix of divided differences L_ij = (f(s_i) - f(s_j)) / (s_i - s_j), with
/// f'(s_i) on near-degenerate pairs. Expects ascending eigenvalues; entries
/// are filled for i <= j and mirrored, so L is exactly symmetric.
inline Matrix loewner_matrix(const Vector& sigma, const ScalarFun& fn,
                             double pair_tol = kLoewnerPairTol) {
  const Eigen::Index n = sigma.size();
  Matrix l(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    l(i, i) = fn.df(sigma(i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double si = sigma(i);
      const double sj = sigma(j);
      double v;
      if (std::abs(si - sj) > pair_tol * std::max(1.0, std::abs(si))) {
        v = (fn.f(si) - fn.f(sj)) / (si - sj);
      } else {
        v = fn.df(si);
      }
      l(i, j) = v;
      l(j, i) = v;
    }
  }
  return l;
}

/// Structured matrix function U f(Sigma) U^T from a precomputed decomposition.
inline SymMatrix spd_fun(const EigDecomposition& eig, const ScalarFun& fn) {
  detail::check_spectrum_domain(fn, eig.eigenvalues);
  Vector fv(eig.eigenvalues.size());
  for (Eigen::Index i = 0; i < fv.size(); ++i) fv(i) = fn.f(eig.eigenvalues(i));
  return SymMatrix(eig.basis * fv.asDiagonal() * eig.basis.transpose());
}

/// Structured matrix function f(P) = U f(Sigma) U^T. The eigenbasis is
/// untouched; only the spectrum passes through f.
inline SymMatrix spd_fun(const SymMatrix& s, const ScalarFun& fn) {
  return spd_fun(sym_eig(s), fn);
}

inline SymMatrix spd_fun(const SPDMatrix& p, const ScalarFun& fn) {
  return spd_fun(p.sym(), fn);
}

/// Backward pass of spd_fun: maps the upstream gradient dL/df(P) to dL/dP via
/// U (L o (U^T G U)) U^T with L the Loewner matrix of the input spectrum.
inline SymMatrix spd_fun_backward(const EigDecomposition& eig, const ScalarFun& fn,
                                  const SymMatrix& upstream,
                                  double pair_tol = kLoewnerPairTol) {
  if (upstream.dim() != eig.dim()) {
    throw InvalidInput("spd_fun_backward: upstream dimension mismatch");
  }
  detail::check_spectrum_domain(fn, eig.eigenvalues);
  const Matrix l = loewner_matrix(eig.eigenvalues, fn, pair_tol);
  const Matrix inner = eig.basis.transpose() * upstream.mat() * eig.basis;
  return SymMatrix(eig.basis * l.cwiseProduct(inner) * eig.basis.transpose());
}

inline SymMatrix spd_fun_backward(const SymMatrix& s, const ScalarFun& fn,
                                  const SymMatrix& upstream,
                                  double pair_tol = kLoewnerPairTol) {
  return spd_fun_backward(sym_eig(s), fn, upstream, pair_tol);
}

inline SymMatrix spd_fun_backward(const SPDMatrix& p, const ScalarFun& fn,
                                  const SymMatrix& upstream,
                                  double pair_tol = kLoewnerPairTol) {
  return spd_fun_backward(p.sym(), fn, upstream, pair_tol);
}

/// Square root and inverse square root from a single decomposition.
struct SpdSqrtPair {
  SPDMatrix sqrt;
  SPDMatrix invsqrt;
};

inline SpdSqrtPair spd_sqrt_pair(const EigDecomposition& eig) {
  detail::check_spectrum_domain(ScalarFun::sqrt(), eig.eigenvalues);
  return SpdSqrtPair{SPDMatrix(spd_fun(eig, ScalarFun::sqrt())),
                     SPDMatrix(spd_fun(eig, ScalarFun::invsqrt()))};
}

inline SpdSqrtPair spd_sqrt_pair(const SPDMatrix& p) {
  return spd_sqrt_pair(sym_eig(p));
}

}  // namespace spdnet
