#include <vector>

#include "doctest.h"
#include "modric/linalg.hpp"
#include "oracles.hpp"

using namespace modric;
using namespace modric::testing;

namespace {

Matrix diag(std::initializer_list<double> d) {
  Vector v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

}  // namespace

TEST_CASE("factor_psd picks Cholesky for the identity") {
  const auto f = factor_psd(Matrix::Identity(3, 3));
  CHECK(f.is_cholesky());
  CHECK(f.rank() == 3);
  CHECK((f.lower() - Matrix::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("factor_psd truncates an explicit zero eigenvalue") {
  const auto f = factor_psd(diag({2.0, 0.0}));
  CHECK_FALSE(f.is_cholesky());
  CHECK(f.rank() == 1);
  Vector ev = f.eigenvalues();
  std::sort(ev.data(), ev.data() + ev.size());
  CHECK(ev(0) == 0.0);
  CHECK(ev(1) == doctest::Approx(2.0));
}

TEST_CASE("factor_psd of a random rank-3 Gram matrix") {
  Rng rng(1);
  const Matrix r = randn(rng, 3, 5);
  const Matrix x = r.transpose() * r;
  const auto f = factor_psd(x);
  CHECK(f.rank() == 3);
  CHECK((f.reassemble() - x).norm() < 1e-12 * (1.0 + x.norm()));
  const auto again = factor_psd(f.reassemble());
  CHECK((again.reassemble() - x).norm() < 1e-12 * (1.0 + x.norm()));
}

TEST_CASE("factor_psd rejects indefinite and non-finite input") {
  CHECK_THROWS_AS(factor_psd(diag({1.0, -1.0})), Error);
  try {
    factor_psd(diag({1.0, -1.0}));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotPsd);
  }
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    factor_psd(bad);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
  }
}

TEST_CASE("pseudo_solve small cases") {
  Matrix b(2, 1);
  b << 3, 4;
  CHECK((pseudo_solve(factor_psd(Matrix::Identity(2, 2)), b) - b).norm() == 0.0);
  b << 4, 0;
  Matrix expect(2, 1);
  expect << 2, 0;
  CHECK((pseudo_solve(factor_psd(diag({2.0, 0.0})), b) - expect).norm() < 1e-15);
  CHECK_THROWS_AS(pseudo_solve(factor_psd(diag({2.0, 0.0})), Matrix::Ones(3, 1)), Error);
}

TEST_CASE("pseudo_solve on a rank-deficient matrix returns the minimum-norm solution") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = random_psd(rng, 4, 2);
    const Matrix b = g * randn(rng, 4, 3);
    const auto f = factor_psd(g);
    const Matrix x = pseudo_solve(f, b);
    CHECK((g * x - b).norm() < 1e-10 * (1.0 + b.norm()));
    CHECK((x - pinv(g) * b).norm() < 1e-9 * (1.0 + x.norm()));
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    for (Index i = 0; i < 2; ++i) CHECK((es.eigenvectors().col(i).transpose() * x).norm() < 1e-9);
  }
}

TEST_CASE("rank-1 Cholesky update and downdate") {
  const auto eye = factor_psd(Matrix::Identity(2, 2));
  Vector v(2);
  v << 1, 0;
  const auto up = chol_rank1_update(eye, v);
  CHECK((up.reassemble() - diag({2.0, 1.0})).norm() < 1e-15);
  CHECK(up.lower()(0, 0) == doctest::Approx(std::sqrt(2.0)));
  const auto down = chol_rank1_downdate(up, v);
  CHECK((down.lower() - Matrix::Identity(2, 2)).norm() < 1e-15);

  Vector three(1);
  three << 3;
  CHECK(chol_rank1_update(factor_psd(Matrix::Identity(1, 1)), three).lower()(0, 0) ==
        doctest::Approx(std::sqrt(10.0)));

  Vector one(1);
  one << 1;
  try {
    chol_rank1_downdate(factor_psd(Matrix::Identity(1, 1)), one);
    FAIL("expected DowndateBreaksPd");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DowndateBreaksPd);
  }
  CHECK_THROWS_AS(chol_rank1_update(factor_psd(diag({1.0, 0.0})), v), Error);
}

TEST_CASE("random rank-1 modifications match direct factorization") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix y = random_psd(rng, 6, 6, 0.5);
    const Vector v = randn_vec(rng, 6);
    const auto fy = factor_psd(y);
    const auto up = chol_rank1_update(fy, v);
    CHECK((up.reassemble() - (y + v * v.transpose())).norm() < 1e-11 * (1.0 + y.norm()));
    const auto back = chol_rank1_downdate(up, v);
    CHECK((back.lower() - fy.lower()).norm() < 1e-9);
    const Eigen::LLT<Matrix> direct(y);
    CHECK((back.lower() - Matrix(direct.matrixL())).norm() < 1e-10 * (1.0 + y.norm()));
  }
}

TEST_CASE("bordered append and deletion of Cholesky factors") {
  Rng rng(4);
  const Matrix x = random_psd(rng, 6, 6, 0.5);
  Matrix l = Eigen::LLT<Matrix>(x.topLeftCorner(4, 4)).matrixL();
  REQUIRE(chol_append(l, x.topRightCorner(4, 2), x.bottomRightCorner(2, 2), 1e-14));
  CHECK((l * l.transpose() - x).norm() < 1e-12);

  const std::vector<Index> removed{1, 4};
  const std::vector<Index> kept{0, 2, 3, 5};
  const Matrix ld = chol_delete(l, removed);
  const Matrix xk = x(kept, kept);
  CHECK((ld * ld.transpose() - xk).norm() < 1e-12);
  CHECK((ld.triangularView<Eigen::StrictlyUpper>().toDenseMatrix()).norm() == 0.0);
}

TEST_CASE("smw_solve") {
  const auto g = factor_psd(Matrix::Constant(1, 1, 2.0));
  const auto c = factor_psd(Matrix::Identity(1, 1));
  const Matrix one = Matrix::Ones(1, 1);
  CHECK(smw_solve(g, one, c, Sign::Downdate, one)(0, 0) == doctest::Approx(1.0));

  Rng rng(5);
  const Matrix g8 = random_psd(rng, 8, 8, 1.0);
  const auto f8 = factor_psd(g8);
  const Matrix b = randn(rng, 8, 3);
  const Matrix zero = Matrix::Zero(8, 2);
  const auto c2 = factor_psd(Matrix::Identity(2, 2));
  CHECK((smw_solve(f8, zero, c2, Sign::Update, b) - pseudo_solve(f8, b)).norm() < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix u = randn(rng, 8, 2);
    const Matrix cm = random_psd(rng, 2, 2, 0.1);
    const auto cf = factor_psd(cm);
    const Matrix up = g8 + u * pinv(cm) * u.transpose();
    const Matrix xu = smw_solve(f8, u, cf, Sign::Update, b);
    const Matrix ref = up.ldlt().solve(b);
    CHECK((xu - ref).norm() <= 1e-9 * ref.norm());

    // downdate by a scaled-down term so the result stays positive definite
    const Matrix small_u = 0.2 * u;
    const Matrix dn = g8 - small_u * pinv(cm) * small_u.transpose();
    if (Eigen::SelfAdjointEigenSolver<Matrix>(dn).eigenvalues().minCoeff() > 1e-3) {
      const Matrix xd = smw_solve(f8, small_u, cf, Sign::Downdate, b);
      const Matrix refd = dn.ldlt().solve(b);
      CHECK((xd - refd).norm() <= 1e-9 * refd.norm());
    }
  }
}

TEST_CASE("smw_solve reports a singular inner system") {
  const auto g = factor_psd(Matrix::Identity(1, 1));
  const auto c = factor_psd(Matrix::Identity(1, 1));
  try {
    smw_solve(g, Matrix::Ones(1, 1), c, Sign::Downdate, Matrix::Ones(1, 1));
    FAIL("expected InnerSystemSingular");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InnerSystemSingular);
  }
}

TEST_CASE("gsc small cases") {
  CHECK((gsc(Matrix::Identity(4, 4), 2) - Matrix::Identity(2, 2)).norm() == 0.0);
  Matrix m(2, 2);
  m << 2, 1, 1, 2;
  CHECK(gsc(m, 1)(0, 0) == doctest::Approx(1.5));
}

TEST_CASE("quotient formula for nested generalized Schur complements") {
  Rng rng(6);
  std::uniform_int_distribution<int> size(1, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const Index na = size(rng), nb = size(rng), nc = size(rng);
    const Index n = na + nb + nc;
    const Index rank = std::uniform_int_distribution<Index>(1, n)(rng);
    const Matrix m = random_psd(rng, n, rank);
    // direct elimination of the last nb+nc block
    const Matrix direct = gsc(m, nb + nc);
    // eliminate the last nc block, then the middle nb block
    const Matrix step = gsc(gsc(m, nc), nb);
    CHECK((direct - step).norm() <= 1e-9 * (1.0 + m.norm()));
    const Matrix inner = gsc(m.bottomRightCorner(nb + nc, nb + nc), nc);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(inner).eigenvalues().minCoeff() >= -1e-9 * (1.0 + m.norm()));
  }
}
