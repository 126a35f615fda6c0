#pragma once

// Dense symmetric positive semidefinite linear algebra used by the Riccati
// machinery: singular-tolerant factorizations, minimum-norm solves, rank-1
// Cholesky modification, Sherman-Morrison-Woodbury solves and generalized
// Schur complements.

#include <Eigen/Dense>
#include <span>

#include "modric/error.hpp"

namespace modric {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tolerances for PSD factorizations. Negative relative thresholds mean
/// "use dim * machine epsilon".
struct FactorOptions {
  double psd_tol = 1e-10;       // eigenvalue < -psd_tol*(1+|X|) => NotPsd
  double pd_pivot_rel = 1e-11;  // Cholesky accepted if all squared pivots > rel*trace
  double rank_rel = 1e-11;      // eigenvalues <= rel*max_eig are truncated
};

enum class FactorKind { Cholesky, Eigen };

enum class Sign { Downdate, Update };

/// Factorization of a symmetric PSD matrix. Cholesky kind stores a lower
/// triangular L with X = L L^T. Eigen kind stores X = U diag(d) U^T with
/// eigenvalues below the rank threshold set to exactly zero.
class PsdFactorization {
 public:
  PsdFactorization() = default;

  static PsdFactorization from_cholesky(Matrix lower);
  static PsdFactorization from_eigen(Matrix vectors, Vector values);

  FactorKind kind() const noexcept { return kind_; }
  Index dim() const noexcept { return dim_; }
  Index rank() const noexcept { return rank_; }
  bool is_cholesky() const noexcept { return kind_ == FactorKind::Cholesky; }

  const Matrix& lower() const;
  const Matrix& eigenvectors() const;
  const Vector& eigenvalues() const;

  Matrix reassemble() const;

  /// Minimum-norm solution of X * Y = B (exact solve for the Cholesky kind).
  Matrix pseudo_solve(const Matrix& rhs) const;

  /// Returns U * S where S S^T = X^+. For the Cholesky kind S = L^{-T};
  /// for the eigen kind S has one column per retained eigenvalue.
  Matrix pinv_sqrt_apply(const Matrix& u) const;

  /// Columns of S with S S^T = X^+ (pinv_sqrt_apply of the identity).
  Index pinv_sqrt_cols() const noexcept { return kind_ == FactorKind::Cholesky ? dim_ : rank_; }

 private:
  FactorKind kind_ = FactorKind::Cholesky;
  Index dim_ = 0;
  Index rank_ = 0;
  Matrix lower_;     // Cholesky kind
  Matrix vectors_;   // eigen kind
  Vector values_;    // eigen kind, truncated
};

double default_rel_tol(Index dim);

/// Throws NonFinite when any entry is NaN or Inf.
void require_finite(const Matrix& x, const char* what);

/// `scale` is an optional reference magnitude for the tolerances, used when X
/// results from cancellation between much larger terms.
PsdFactorization factor_psd(const Matrix& x, const FactorOptions& opts = {}, double scale = 0.0);

Matrix pseudo_solve(const PsdFactorization& f, const Matrix& rhs);

inline Matrix symmetrized(const Matrix& x) { return 0.5 * (x + x.transpose()); }

// Rank-1 Cholesky modification of L L^T +/- v v^T. The in-place downdate
// returns false (leaving L in an unspecified state) when positive
// definiteness is lost beyond `pivot_tol` (absolute, on squared pivots).
void chol_update_inplace(Matrix& lower, Vector v);
bool chol_downdate_inplace(Matrix& lower, Vector v, double pivot_tol);

PsdFactorization chol_rank1_update(const PsdFactorization& f, const Vector& v);
/// Throws DowndateBreaksPd when the downdated matrix is not numerically PD.
PsdFactorization chol_rank1_downdate(const PsdFactorization& f, const Vector& v,
                                     const FactorOptions& opts = {});

/// Bordered Cholesky: factor of [[X, g], [g^T, g0]] from the factor of X.
/// Returns false if the enlarged matrix is not numerically PD.
bool chol_append(Matrix& lower, const Matrix& g, const Matrix& g0, double pivot_rel);

/// Cholesky factor of X with the rows/columns in `removed` (sorted,
/// ascending) deleted. Never fails.
Matrix chol_delete(const Matrix& lower, std::span<const Index> removed);

/// Solves (G +/- U C^+ U^T) X = B using only solves with the factor of G and
/// an inner system whose size is the rank of C. `base` must outlive the solver.
class SmwSolver {
 public:
  SmwSolver(const PsdFactorization& base, const Matrix& u, const PsdFactorization& core,
            Sign sign);

  /// (G +/- U C^+ U^T)^{-1} B.
  Matrix solve(const Matrix& rhs) const;
  /// Same as solve() when `base_solution` = G^{-1} B is already known.
  Matrix solve_from_base(const Matrix& base_solution) const;

  /// U S with S S^T = C^+, the columns of the symmetric low-rank term.
  const Matrix& scaled_u() const noexcept { return scaled_u_; }
  /// G^{-1} U S.
  const Matrix& base_inv_scaled_u() const noexcept { return base_inv_u_; }

 private:
  const PsdFactorization* base_;
  Sign sign_;
  Matrix scaled_u_;   // U S
  Matrix base_inv_u_; // G^{-1} U S
  Eigen::LLT<Matrix> inner_;
};

Matrix smw_solve(const PsdFactorization& base, const Matrix& u, const PsdFactorization& core,
                 Sign sign, const Matrix& rhs);

/// Generalized Schur complement of the trailing `lower_dim` block:
/// A - B D^+ B^T for M = [[A, B], [B^T, D]].
Matrix gsc(const Matrix& m, Index lower_dim, const FactorOptions& opts = {});

}  // namespace modric
