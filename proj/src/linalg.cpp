#include "modric/linalg.hpp"

#include <sstream>
#include <cmath>
#include <limits>

namespace modric {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPsd: return "NotPsd";
    case ErrorCode::NotPd: return "NotPd";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::DowndateBreaksPd: return "DowndateBreaksPd";
    case ErrorCode::InnerSystemSingular: return "InnerSystemSingular";
    case ErrorCode::InfeasibleOrUnbounded: return "InfeasibleOrUnbounded";
    case ErrorCode::RangeConditionViolated: return "RangeConditionViolated";
    case ErrorCode::InvalidDelta: return "InvalidDelta";
    case ErrorCode::InvalidProblem: return "InvalidProblem";
    case ErrorCode::IterationLimit: return "IterationLimit";
    case ErrorCode::UnboundedDirection: return "UnboundedDirection";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::InfeasibleStart: return "InfeasibleStart";
    case ErrorCode::ThresholdExceeded: return "ThresholdExceeded";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

double default_rel_tol(Index dim) {
  return static_cast<double>(std::max<Index>(dim, 1)) * std::numeric_limits<double>::epsilon();
}

void require_finite(const Matrix& x, const char* what) {
  if (!x.allFinite()) throw Error(ErrorCode::NonFinite, std::string(what) + " has NaN/Inf entries");
}

PsdFactorization PsdFactorization::from_cholesky(Matrix lower) {
  PsdFactorization f;
  f.kind_ = FactorKind::Cholesky;
  f.dim_ = lower.rows();
  f.rank_ = f.dim_;
  f.lower_ = std::move(lower);
  return f;
}

PsdFactorization PsdFactorization::from_eigen(Matrix vectors, Vector values) {
  PsdFactorization f;
  f.kind_ = FactorKind::Eigen;
  f.dim_ = values.size();
  f.rank_ = (values.array() > 0.0).count();
  f.vectors_ = std::move(vectors);
  f.values_ = std::move(values);
  return f;
}

const Matrix& PsdFactorization::lower() const {
  if (kind_ != FactorKind::Cholesky) throw Error(ErrorCode::KindMismatch, "not a Cholesky factorization");
  return lower_;
}

const Matrix& PsdFactorization::eigenvectors() const {
  if (kind_ != FactorKind::Eigen) throw Error(ErrorCode::KindMismatch, "not an eigen factorization");
  return vectors_;
}

const Vector& PsdFactorization::eigenvalues() const {
  if (kind_ != FactorKind::Eigen) throw Error(ErrorCode::KindMismatch, "not an eigen factorization");
  return values_;
}

Matrix PsdFactorization::reassemble() const {
  if (kind_ == FactorKind::Cholesky) return lower_ * lower_.transpose();
  return vectors_ * values_.asDiagonal() * vectors_.transpose();
}

Matrix PsdFactorization::pseudo_solve(const Matrix& rhs) const {
  if (rhs.rows() != dim_) throw Error(ErrorCode::DimensionMismatch, "pseudo_solve rhs rows");
  if (dim_ == 0) return Matrix::Zero(0, rhs.cols());
  if (kind_ == FactorKind::Cholesky) {
    Matrix y = lower_.triangularView<Eigen::Lower>().solve(rhs);
    lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
    return y;
  }
  Matrix proj = vectors_.transpose() * rhs;
  for (Index i = 0; i < dim_; ++i) {
    const double d = values_(i);
    if (d > 0.0) proj.row(i) /= d;
    else proj.row(i).setZero();
  }
  return vectors_ * proj;
}

Matrix PsdFactorization::pinv_sqrt_apply(const Matrix& u) const {
  if (u.cols() != dim_) throw Error(ErrorCode::DimensionMismatch, "pinv_sqrt_apply cols");
  if (kind_ == FactorKind::Cholesky) {
    // U L^{-T} = (L^{-1} U^T)^T
    if (dim_ == 0) return Matrix::Zero(u.rows(), 0);
    return lower_.triangularView<Eigen::Lower>().solve(u.transpose()).transpose();
  }
  Matrix out(u.rows(), rank_);
  Index col = 0;
  for (Index i = 0; i < dim_; ++i) {
    if (values_(i) > 0.0) {
      out.col(col++) = (u * vectors_.col(i)) / std::sqrt(values_(i));
    }
  }
  return out;
}

PsdFactorization factor_psd(const Matrix& x, const FactorOptions& opts, double scale) {
  if (x.rows() != x.cols()) throw Error(ErrorCode::DimensionMismatch, "factor_psd needs a square matrix");
  const Index n = x.rows();
  if (n == 0) return PsdFactorization::from_cholesky(Matrix(0, 0));
  require_finite(x, "factor_psd input");

  const Matrix xs = symmetrized(x);
  const double pd_rel = opts.pd_pivot_rel >= 0.0 ? opts.pd_pivot_rel : default_rel_tol(n);
  const double trace = xs.trace();
  if (trace > 0.0 && trace >= scale * pd_rel) {
    Eigen::LLT<Matrix> llt(xs);
    if (llt.info() == Eigen::Success) {
      Matrix l = llt.matrixL();
      const double min_pivot_sq = l.diagonal().array().square().minCoeff();
      if (min_pivot_sq > pd_rel * std::max(trace, scale)) return PsdFactorization::from_cholesky(std::move(l));
    }
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(xs);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NotPsd, "eigendecomposition failed");
  Vector values = es.eigenvalues();
  const double norm = std::max(values.cwiseAbs().maxCoeff(), scale);
  if (values.minCoeff() < -opts.psd_tol * (1.0 + norm)) {
    std::ostringstream os;
    os << "eigenvalue " << values.minCoeff() << " below tolerance " << -opts.psd_tol * (1.0 + norm);
    throw Error(ErrorCode::NotPsd, os.str());
  }
  const double rank_rel = opts.rank_rel >= 0.0 ? opts.rank_rel : default_rel_tol(n);
  const double cut = rank_rel * std::max(values.maxCoeff(), scale);
  for (Index i = 0; i < n; ++i) {
    if (values(i) <= cut) values(i) = 0.0;
  }
  return PsdFactorization::from_eigen(es.eigenvectors(), std::move(values));
}

Matrix pseudo_solve(const PsdFactorization& f, const Matrix& rhs) { return f.pseudo_solve(rhs); }

void chol_update_inplace(Matrix& lower, Vector v) {
  const Index n = lower.rows();
  for (Index k = 0; k < n; ++k) {
    const double lkk = lower(k, k);
    const double r = std::hypot(lkk, v(k));
    const double c = r / lkk;
    const double s = v(k) / lkk;
    lower(k, k) = r;
    const Index m = n - k - 1;
    if (m > 0) {
      auto col = lower.col(k).tail(m);
      auto tail = v.tail(m);
      col = (col + s * tail) / c;
      tail = c * tail - s * col;
    }
  }
}

bool chol_downdate_inplace(Matrix& lower, Vector v, double pivot_tol) {
  const Index n = lower.rows();
  for (Index k = 0; k < n; ++k) {
    const double lkk = lower(k, k);
    const double r2 = (lkk - v(k)) * (lkk + v(k));
    if (!(r2 > pivot_tol)) return false;
    const double r = std::sqrt(r2);
    const double c = r / lkk;
    const double s = v(k) / lkk;
    lower(k, k) = r;
    const Index m = n - k - 1;
    if (m > 0) {
      auto col = lower.col(k).tail(m);
      auto tail = v.tail(m);
      col = (col - s * tail) / c;
      tail = c * tail - s * col;
    }
  }
  return true;
}

PsdFactorization chol_rank1_update(const PsdFactorization& f, const Vector& v) {
  if (!f.is_cholesky()) throw Error(ErrorCode::KindMismatch, "rank-1 update needs a Cholesky factor");
  if (v.size() != f.dim()) throw Error(ErrorCode::DimensionMismatch, "rank-1 update vector size");
  Matrix l = f.lower();
  chol_update_inplace(l, v);
  return PsdFactorization::from_cholesky(std::move(l));
}

PsdFactorization chol_rank1_downdate(const PsdFactorization& f, const Vector& v,
                                     const FactorOptions& opts) {
  if (!f.is_cholesky()) throw Error(ErrorCode::KindMismatch, "rank-1 downdate needs a Cholesky factor");
  if (v.size() != f.dim()) throw Error(ErrorCode::DimensionMismatch, "rank-1 downdate vector size");
  Matrix l = f.lower();
  const double rel = opts.pd_pivot_rel >= 0.0 ? opts.pd_pivot_rel : default_rel_tol(f.dim());
  const double tol = rel * l.squaredNorm();
  if (!chol_downdate_inplace(l, v, tol)) {
    throw Error(ErrorCode::DowndateBreaksPd, "downdate leaves a matrix that is not positive definite");
  }
  return PsdFactorization::from_cholesky(std::move(l));
}

bool chol_append(Matrix& lower, const Matrix& g, const Matrix& g0, double pivot_rel) {
  const Index n = lower.rows();
  const Index k = g0.rows();
  if (g.rows() != n || g.cols() != k || g0.cols() != k) {
    throw Error(ErrorCode::DimensionMismatch, "chol_append block sizes");
  }
  Matrix w = n > 0 ? Matrix(lower.triangularView<Eigen::Lower>().solve(g)) : Matrix::Zero(0, k);
  Matrix schur = symmetrized(g0 - w.transpose() * w);
  Eigen::LLT<Matrix> llt(schur);
  if (k > 0 && llt.info() != Eigen::Success) return false;
  Matrix l22 = k > 0 ? Matrix(llt.matrixL()) : Matrix(0, 0);
  const double trace = lower.squaredNorm() + g0.trace();
  if (k > 0 && !(l22.diagonal().array().square().minCoeff() > pivot_rel * trace)) return false;

  Matrix out = Matrix::Zero(n + k, n + k);
  out.topLeftCorner(n, n) = lower;
  out.bottomLeftCorner(k, n) = w.transpose();
  out.bottomRightCorner(k, k) = l22;
  lower = std::move(out);
  return true;
}

Matrix chol_delete(const Matrix& lower, std::span<const Index> removed) {
  Matrix l = lower;
  // Delete from the back so earlier indices stay valid.
  for (auto it = removed.rbegin(); it != removed.rend(); ++it) {
    const Index j = *it;
    const Index n = l.rows();
    if (j < 0 || j >= n) throw Error(ErrorCode::DimensionMismatch, "chol_delete index out of range");
    const Index tail = n - j - 1;
    Matrix next(n - 1, n - 1);
    next.topLeftCorner(j, j) = l.topLeftCorner(j, j);
    next.topRightCorner(j, tail).setZero();
    next.bottomLeftCorner(tail, j) = l.bottomLeftCorner(tail, j);
    Matrix l33 = l.bottomRightCorner(tail, tail);
    chol_update_inplace(l33, l.col(j).tail(tail));
    next.bottomRightCorner(tail, tail) = l33;
    l = std::move(next);
  }
  return l;
}

SmwSolver::SmwSolver(const PsdFactorization& base, const Matrix& u, const PsdFactorization& core,
                     Sign sign)
    : base_(&base), sign_(sign) {
  if (!base.is_cholesky()) throw Error(ErrorCode::KindMismatch, "SMW needs a positive definite base");
  if (u.rows() != base.dim() || u.cols() != core.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "SMW low-rank factor dimensions");
  }
  scaled_u_ = core.pinv_sqrt_apply(u);
  base_inv_u_ = base.pseudo_solve(scaled_u_);
  const Index r = scaled_u_.cols();
  const double s = sign == Sign::Update ? 1.0 : -1.0;
  Matrix inner = Matrix::Identity(r, r) + s * (scaled_u_.transpose() * base_inv_u_);
  inner = symmetrized(inner);
  if (r > 0) {
    inner_.compute(inner);
    const bool ok = inner_.info() == Eigen::Success &&
                    Matrix(inner_.matrixL()).diagonal().array().square().minCoeff() >
                        1e3 * default_rel_tol(r) * std::max(1.0, inner.trace());
    if (!ok) throw Error(ErrorCode::InnerSystemSingular, "SMW inner system is not positive definite");
  }
}

Matrix SmwSolver::solve(const Matrix& rhs) const { return solve_from_base(base_->pseudo_solve(rhs)); }

Matrix SmwSolver::solve_from_base(const Matrix& base_solution) const {
  if (scaled_u_.cols() == 0) return base_solution;
  const double s = sign_ == Sign::Update ? 1.0 : -1.0;
  Matrix inner_rhs = scaled_u_.transpose() * base_solution;
  return base_solution - s * (base_inv_u_ * inner_.solve(inner_rhs));
}

Matrix smw_solve(const PsdFactorization& base, const Matrix& u, const PsdFactorization& core,
                 Sign sign, const Matrix& rhs) {
  return SmwSolver(base, u, core, sign).solve(rhs);
}

Matrix gsc(const Matrix& m, Index lower_dim, const FactorOptions& opts) {
  if (m.rows() != m.cols() || lower_dim < 0 || lower_dim > m.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "gsc partition");
  }
  const Index upper = m.rows() - lower_dim;
  const auto d = factor_psd(m.bottomRightCorner(lower_dim, lower_dim), opts);
  const Matrix b = m.topRightCorner(upper, lower_dim);
  const Matrix dpinv_bt = d.pseudo_solve(b.transpose());
  return symmetrized(m.topLeftCorner(upper, upper) - b * dpinv_bt);
}

}  // namespace modric
