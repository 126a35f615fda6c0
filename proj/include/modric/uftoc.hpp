#pragma once

// Equality-constrained finite-horizon optimal control (UFTOC) problems and
// their solution by Riccati factorization plus backward/forward sweeps.

#include <vector>

#include "modric/linalg.hpp"

namespace modric {

/// Data of one stage t: dynamics x_{t+1} = A x_t + Bw w_t + a and the cost
/// 1/2 [x;w]^T [[Qx, Qxw], [Qxw^T, Qw]] [x;w] + lx^T x + lw^T w + c.
struct UftocStage {
  Matrix A;
  Matrix Bw;
  Vector a;
  Matrix Qx;
  Matrix Qxw;
  Matrix Qw;
  Vector lx;
  Vector lw;
  double c = 0.0;

  Index nw() const noexcept { return Bw.cols(); }
};

struct UftocProblem {
  std::vector<UftocStage> stages;
  Matrix QxN;
  Vector lxN;
  double cN = 0.0;
  Vector x0;

  int horizon() const noexcept { return static_cast<int>(stages.size()); }
  Index nx() const noexcept { return x0.size(); }

  /// Dimension and finiteness checks; with `check_psd` also verifies that
  /// every stacked stage cost and the terminal cost are PSD.
  void validate(bool check_psd = true, double psd_tol = 1e-10) const;
};

/// Factorization quantities of stage t (index t+1 in the usual notation).
struct RiccatiStage {
  Matrix F;
  Matrix G;
  Matrix H;
  Matrix K;
  PsdFactorization g_factor;

  bool singular() const noexcept { return !g_factor.is_cholesky(); }
};

struct RiccatiFactorization {
  std::vector<Matrix> P;             // P_0 .. P_N
  std::vector<RiccatiStage> stages;  // stage t holds F_{t+1}, G_{t+1}, H_{t+1}, K_{t+1}

  int horizon() const noexcept { return static_cast<int>(stages.size()); }
  std::vector<int> singular_stages() const;
};

struct BackwardPass {
  std::vector<Vector> psi;    // Psi_0 .. Psi_N
  std::vector<Vector> k;      // k_1 .. k_N, stored at index t
  std::vector<double> cbar;   // cbar_0 .. cbar_N
};

struct Trajectory {
  std::vector<Vector> x;       // x_0 .. x_N
  std::vector<Vector> w;       // w_0 .. w_{N-1}
  std::vector<Vector> lambda;  // lambda_0 .. lambda_N
};

struct RiccatiOptions {
  FactorOptions factor;
  double range_tol = 1e-8;  // residual tolerance for RHS in range(G) at singular stages
};

/// Fixed (working-set) part of the inputs of one stage, used to recover
/// the bound multipliers. `free_idx`/`fixed_idx` map w and v entries back
/// to the original input ordering.
struct FixedInputStage {
  std::vector<Index> free_idx;
  std::vector<Index> fixed_idx;
  Matrix Bv;
  Matrix Qxv;
  Matrix Qwv;
  Matrix Qv;
  Vector lv;
  Vector v;
};

RiccatiFactorization factorize(const UftocProblem& p, const RiccatiOptions& opts = {});

/// One step of the Riccati factorization. Returns the stage blocks and
/// writes P_t to `p_out`. `p_next_scale` is the largest magnitude of the
/// terms P_{t+1} was formed from, which sets the rounding level for G.
RiccatiStage factorize_stage(const UftocStage& s, const Matrix& p_next, Matrix& p_out,
                             const RiccatiOptions& opts = {}, double p_next_scale = -1.0);

/// Recomputes stages last_stage, ..., 0 of `f` from the stored P_{last_stage+1}.
void refactorize_below(const UftocProblem& p, RiccatiFactorization& f, int last_stage,
                       const RiccatiOptions& opts = {});

BackwardPass backward(const UftocProblem& p, const RiccatiFactorization& f,
                      const RiccatiOptions& opts = {});

/// Re-runs the backward recursion for t = last_stage, ..., 0 only, keeping
/// the entries of `b` for later stages.
void backward_below(const UftocProblem& p, const RiccatiFactorization& f, BackwardPass& b,
                    int last_stage, const RiccatiOptions& opts = {});

Trajectory forward(const UftocProblem& p, const RiccatiFactorization& f, const BackwardPass& b);

/// Bound multipliers: per stage a vector over all inputs of that stage,
/// zero on free inputs and the gradient of the Lagrangian w.r.t. v on the
/// fixed ones.
std::vector<Vector> dual_forward(const std::vector<FixedInputStage>& fixed, const Trajectory& traj);

/// Euclidean norm of the KKT residual (stationarity, dynamics and initial
/// condition), assembled directly from the problem data.
double kkt_residual(const UftocProblem& p, const Trajectory& traj);

double objective(const UftocProblem& p, const Trajectory& traj);

/// 1/2 x0^T P_0 x0 - Psi_0^T x0 + cbar_0.
double value_function(const RiccatiFactorization& f, const BackwardPass& b, const Vector& x0);

}  // namespace modric
