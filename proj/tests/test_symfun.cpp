#include "support/test_helpers.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include "spdnet/symfun.hpp"

using namespace spdnet;
using testutil::fd_gradient_sym;
using testutil::random_spd;
using testutil::random_sym;
using testutil::rel_err;
using testutil::spd_with_spectrum;

TEST_CASE("SymMatrix symmetrizes and validates") {
  Matrix a(2, 2);
  a << 1.0, 2.0, 4.0, 3.0;
  const SymMatrix s(a);
  REQUIRE(s(0, 1) == 3.0);
  REQUIRE(s(1, 0) == 3.0);
  REQUIRE_THROWS_AS(SymMatrix(Matrix::Zero(2, 3)), InvalidInput);
  REQUIRE_THROWS_AS(SymMatrix(Matrix()), InvalidInput);
}

TEST_CASE("sym_eig reconstructs the input with a fixed sign convention") {
  Rng rng(1);
  for (int k = 0; k < 10; ++k) {
    const SymMatrix s = random_sym(5, rng);
    const EigDecomposition eig = sym_eig(s);
    const Matrix rec =
        eig.basis * eig.eigenvalues.asDiagonal() * eig.basis.transpose();
    REQUIRE(rel_err(rec, s.mat()) < 1e-12);
    // ascending spectrum
    for (Eigen::Index i = 1; i < eig.dim(); ++i) {
      REQUIRE(eig.eigenvalues(i) >= eig.eigenvalues(i - 1));
    }
    // sign convention: first nonzero entry of each eigenvector is positive
    for (Eigen::Index j = 0; j < eig.dim(); ++j) {
      for (Eigen::Index i = 0; i < eig.dim(); ++i) {
        if (eig.basis(i, j) != 0.0) {
          REQUIRE(eig.basis(i, j) > 0.0);
          break;
        }
      }
    }
    // bitwise repeatability
    const EigDecomposition again = sym_eig(s);
    REQUIRE(eig.basis == again.basis);
    REQUIRE(eig.eigenvalues == again.eigenvalues);
  }
  REQUIRE_THROWS_AS(
      sym_eig(SymMatrix(Matrix::Constant(2, 2, std::nan("")))), InvalidInput);
}

TEST_CASE("spd_fun matches scalar application on diagonal matrices") {
  Vector d(3);
  d << 0.5, 1.0, 4.0;
  const SPDMatrix p(SymMatrix(Matrix(d.asDiagonal())));
  const SymMatrix root = spd_fun(p, ScalarFun::sqrt());
  for (Eigen::Index i = 0; i < 3; ++i) {
    REQUIRE_THAT(root(i, i), Catch::Matchers::WithinAbs(std::sqrt(d(i)), 1e-14));
  }
  const SymMatrix lg = spd_fun(p, ScalarFun::log());
  REQUIRE_THAT(lg(2, 2), Catch::Matchers::WithinAbs(std::log(4.0), 1e-14));
}

TEST_CASE("spd_fun agrees with a Schur-based matrix function oracle") {
  Rng rng(2);
  for (int k = 0; k < 10; ++k) {
    const SPDMatrix p = random_spd(6, rng);
    REQUIRE(rel_err(spd_fun(p, ScalarFun::log()).mat(), p.mat().log()) < 1e-10);
    REQUIRE(rel_err(spd_fun(p, ScalarFun::sqrt()).mat(), p.mat().sqrt()) < 1e-10);
    REQUIRE(rel_err(spd_fun(p, ScalarFun::power(0.3)).mat(), p.mat().pow(0.3)) < 1e-10);

    const SymMatrix s = random_sym(6, rng);
    REQUIRE(rel_err(spd_fun(s, ScalarFun::exp()).mat(), s.mat().exp()) < 1e-10);
  }
}

TEST_CASE("spd_fun inverse square root inverts the square root") {
  Rng rng(3);
  const SPDMatrix p = random_spd(5, rng);
  const SymMatrix a = spd_fun(p, ScalarFun::sqrt());
  const SymMatrix b = spd_fun(p, ScalarFun::invsqrt());
  REQUIRE(rel_err(a.mat() * b.mat(), Matrix::Identity(5, 5)) < 1e-12);
  const SpdSqrtPair pair = spd_sqrt_pair(p);
  REQUIRE(pair.sqrt.mat() == a.mat());
  REQUIRE(pair.invsqrt.mat() == b.mat());
}

TEST_CASE("rect clamps the spectrum from below") {
  Rng rng(4);
  Vector lambda(4);
  lambda << 1e-9, 0.05, 0.5, 2.0;
  const SPDMatrix p = spd_with_spectrum(lambda, rng);
  const SymMatrix r = spd_fun(p, ScalarFun::rect(0.1));
  const EigDecomposition eig = sym_eig(r);
  REQUIRE(eig.eigenvalues(0) >= 0.1 - 1e-12);
  REQUIRE_THAT(eig.eigenvalues(3), Catch::Matchers::WithinAbs(2.0, 1e-9));
  REQUIRE_THROWS_AS(ScalarFun::rect(0.0), InvalidInput);
  REQUIRE_THROWS_AS(ScalarFun::rect(-1.0), InvalidInput);
}

TEST_CASE("domain violations raise DomainError carrying the eigenvalue") {
  Matrix m(2, 2);
  m << 1.0, 0.0, 0.0, -0.25;
  const SymMatrix s(m);
  try {
    spd_fun(s, ScalarFun::log());
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    REQUIRE_THAT(e.eigenvalue(), Catch::Matchers::WithinAbs(-0.25, 1e-14));
  }
  // exp is defined on the whole real line
  REQUIRE_NOTHROW(spd_fun(s, ScalarFun::exp()));
}

TEST_CASE("loewner matrix holds divided differences and derivative fallbacks") {
  Vector sigma(3);
  sigma << 1.0, 1.0 + 1e-12, 4.0;
  const Matrix l = loewner_matrix(sigma, ScalarFun::log());
  // distinct pair: (log 1 - log 4) / (1 - 4)
  REQUIRE_THAT(l(0, 2),
               Catch::Matchers::WithinAbs((0.0 - std::log(4.0)) / (1.0 - 4.0), 1e-12));
  // near-degenerate pair falls back to f'(1) = 1
  REQUIRE_THAT(l(0, 1), Catch::Matchers::WithinAbs(1.0, 1e-9));
  // diagonal is f'
  REQUIRE_THAT(l(2, 2), Catch::Matchers::WithinAbs(0.25, 1e-14));
  REQUIRE(l == l.transpose());
}

TEST_CASE("spd_fun_backward matches finite differences for every function") {
  Rng rng(5);
  struct Case {
    ScalarFun fn;
    double lmin, lmax;
  };
  const Case cases[] = {
      {ScalarFun::sqrt(), 0.2, 4.0},    {ScalarFun::invsqrt(), 0.2, 4.0},
      {ScalarFun::log(), 0.2, 4.0},     {ScalarFun::exp(), 0.2, 2.0},
      {ScalarFun::power(0.3), 0.2, 4.0}, {ScalarFun::power(-1.0), 0.2, 4.0},
      {ScalarFun::rect(0.1), 0.2, 4.0},  // spectrum entirely above the kink
  };
  for (const Case& c : cases) {
    for (int k = 0; k < 20; ++k) {
      const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng.uniform_index(8));
      const SPDMatrix p = random_spd(n, rng, c.lmin, c.lmax);
      const SymMatrix up = random_sym(n, rng);
      const Matrix analytic = spd_fun_backward(p, c.fn, up).mat();
      const auto loss = [&](const Matrix& x) {
        return testutil::fro_dot(up.mat(), spd_fun(SymMatrix(x), c.fn).mat());
      };
      const Matrix fd = fd_gradient_sym(loss, p.mat());
      INFO("fn=" << c.fn.name() << " n=" << n << " k=" << k);
      REQUIRE(rel_err(analytic, fd) < 1e-5);
    }
  }
}

TEST_CASE("rect backward below the threshold kills the gradient") {
  Rng rng(6);
  Vector lambda(3);
  lambda << 0.01, 0.02, 0.03;  // all clamped by rect(0.1)
  const SPDMatrix p = spd_with_spectrum(lambda, rng);
  const SymMatrix up = random_sym(3, rng);
  const Matrix g = spd_fun_backward(p, ScalarFun::rect(0.1), up).mat();
  REQUIRE(g.norm() < 1e-14);
}

TEST_CASE("spd_fun_backward handles exactly repeated eigenvalues") {
  Rng rng(7);
  Vector lambda(4);
  lambda << 0.5, 0.5, 0.5, 2.0;  // the degenerate branch must engage exactly
  const SPDMatrix p = spd_with_spectrum(lambda, rng);
  const SymMatrix up = random_sym(4, rng);
  const Matrix analytic = spd_fun_backward(p, ScalarFun::log(), up).mat();
  const auto loss = [&](const Matrix& x) {
    return testutil::fro_dot(up.mat(), spd_fun(SymMatrix(x), ScalarFun::log()).mat());
  };
  const Matrix fd = fd_gradient_sym(loss, p.mat());
  REQUIRE(rel_err(analytic, fd) < 1e-5);
}

TEST_CASE("spd_fun_backward of the identity function is the identity map") {
  // power(1) has Loewner matrix all ones, so the upstream passes through.
  Rng rng(8);
  const SPDMatrix p = random_spd(4, rng);
  const SymMatrix up = random_sym(4, rng);
  const Matrix g = spd_fun_backward(p, ScalarFun::power(1.0), up).mat();
  REQUIRE(rel_err(g, up.mat()) < 1e-12);
}

TEST_CASE("spd_fun_backward validates shapes") {
  Rng rng(9);
  const SPDMatrix p = random_spd(3, rng);
  const SymMatrix up = random_sym(4, rng);
  REQUIRE_THROWS_AS(spd_fun_backward(p, ScalarFun::log(), up), InvalidInput);
}
