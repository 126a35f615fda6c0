#pragma once

// Dual of a state- and input-constrained finite-horizon problem, written as
// another input-constrained problem in reversed time so that the Riccati and
// active-set machinery applies unchanged.
//
// Primal, for t = 0..N-1:
//   x_{t+1} = A x_t + B u_t + a,  z_t = M x_t,
//   cost 1/2 [z;u]^T Q [z;u] + lz^T z + lu^T u + c,  Hx x_t + Hu u_t + h <= 0,
// and at t = N: z_N = M_N x_N, cost 1/2 z^T QzN z + lzN^T z + cN, HxN x_N + hN <= 0.
//
// Dual stage tau = N - t has state alpha_{t+1} (the dynamics multiplier) and
// input (beta_t, gamma_t) with gamma_t >= 0.

#include <vector>

#include "modric/asqp.hpp"

namespace modric {

struct GeneralStage {
  Matrix A;
  Matrix B;
  Vector a;
  Matrix M;    // nz x nx
  Matrix Q;    // (nz+nu) x (nz+nu), positive definite
  Vector lz;
  Vector lu;
  double c = 0.0;
  Matrix Hx;   // nc x nx
  Matrix Hu;   // nc x nu
  Vector h;

  Index nz() const noexcept { return M.rows(); }
  Index nu() const noexcept { return B.cols(); }
  Index nc() const noexcept { return h.size(); }
};

struct GeneralCftoc {
  std::vector<GeneralStage> stages;
  Matrix MN;
  Matrix QzN;
  Vector lzN;
  double cN = 0.0;
  Matrix HxN;
  Vector hN;
  Vector x0;

  int horizon() const noexcept { return static_cast<int>(stages.size()); }
  Index nx() const noexcept { return x0.size(); }
  /// Constraint count at stage t (t = N is the terminal stage).
  Index nc(int t) const { return t == horizon() ? hN.size() : stages[t].nc(); }
  Index nz(int t) const { return t == horizon() ? MN.rows() : stages[t].nz(); }

  /// Dimension checks plus strict positive definiteness of every Q and QzN.
  void validate() const;
};

/// Inverse cost blocks per primal stage and the layout of the dual inputs.
struct DualMap {
  int horizon = 0;                 // primal N
  std::vector<Matrix> Qbar;        // inverse of Q for t < N
  Matrix QzN_inv;
  std::vector<Index> nz;           // per primal stage t = 0..N
  std::vector<Index> nc;           // per primal stage t = 0..N

  int dual_stage(int t) const { return horizon - t; }
  /// Position of gamma_{i,t} within the dual input of stage N - t.
  Index gamma_position(int t, Index i) const { return nz[t] + i; }
};

struct Dualized {
  CftocProblem dual;   // horizon N+1, zero initial state, bounds only on gamma
  DualMap map;
};

Dualized build_dual(const GeneralCftoc& p);

/// Active primal constraints, indexed [t][i] for t = 0..N.
using ConstraintSet = std::vector<std::vector<bool>>;

ConstraintSet empty_constraint_set(const GeneralCftoc& p);
std::size_t count(const ConstraintSet& s);

/// gamma_{i,t} is fixed at zero exactly when (i, t) is not active in the primal.
WorkingSet map_working_set(const DualMap& map, const ConstraintSet& primal);
ConstraintSet unmap_working_set(const DualMap& map, const WorkingSet& dual);

struct PrimalPoint {
  std::vector<Vector> x;   // x_0 .. x_N
  std::vector<Vector> u;   // u_0 .. u_{N-1}
};

/// Primal states and inputs from the dual states, inputs and dynamics
/// multipliers.
PrimalPoint recover_primal(const GeneralCftoc& p, const DualMap& map, const std::vector<Vector>& xd,
                           const std::vector<Vector>& ud, const std::vector<Vector>& lambda_d);

/// Solution of the dual equality-constrained subproblem for a dual working set.
struct DualDirection {
  Partition part;
  RiccatiFactorization f;
  BackwardPass b;
  Trajectory traj;
  std::vector<Vector> u;   // dual inputs, fixed gammas included
};

DualDirection dual_search_direction(const CftocProblem& dual, const WorkingSet& ws,
                                    const RiccatiOptions& opts = {});

double primal_objective(const GeneralCftoc& p, const PrimalPoint& pt);
/// Largest violation of the primal inequality constraints and dynamics.
double primal_infeasibility(const GeneralCftoc& p, const PrimalPoint& pt);

struct GeneralSolution {
  PrimalPoint primal;
  AsSolution dual;
  ConstraintSet active;
};

/// Solves the dual with the active-set solver, starting from the empty
/// primal working set, and recovers the primal solution.
GeneralSolution solve_via_dual(const GeneralCftoc& p, const AsOptions& opts = {});

}  // namespace modric
