#pragma once

// Primal active-set solver for input-constrained finite-horizon optimal
// control. Each search direction is the solution of a UFTOC problem in which
// the inputs of the working set are fixed at their bounds; after the first
// iteration the Riccati factorization is modified instead of recomputed.

#include <cstdint>
#include <utility>
#include <vector>

#include "modric/lowrank.hpp"

namespace modric {

/// Stage t: x_{t+1} = A x_t + B u_t + a, cost
/// 1/2 [x;u]^T [[Qx, Qxu], [Qxu^T, Qu]] [x;u] + lx^T x + lu^T u + c and
/// umin <= u <= umax (entries may be infinite).
struct CftocStage {
  Matrix A;
  Matrix B;
  Vector a;
  Matrix Qx;
  Matrix Qxu;
  Matrix Qu;
  Vector lx;
  Vector lu;
  double c = 0.0;
  Vector umin;
  Vector umax;

  Index nu() const noexcept { return B.cols(); }
};

struct CftocProblem {
  std::vector<CftocStage> stages;
  Matrix QxN;
  Vector lxN;
  double cN = 0.0;
  Vector x0;

  int horizon() const noexcept { return static_cast<int>(stages.size()); }
  Index nx() const noexcept { return x0.size(); }
  Index total_inputs() const;

  void validate(bool check_psd = true, double psd_tol = 1e-10) const;
};

enum class Bound : std::uint8_t { Free, Lower, Upper };

/// Per-stage bound status of every input plus the order in which the free
/// inputs appear in w_t. Newly freed inputs are appended at the end.
struct WorkingSet {
  std::vector<std::vector<Bound>> status;
  std::vector<std::vector<Index>> free_order;

  /// All inputs free, in natural order.
  static WorkingSet all_free(const CftocProblem& p);
  /// Builds a working set from explicit statuses; free inputs in natural order.
  static WorkingSet from_status(std::vector<std::vector<Bound>> status);

  std::size_t active_count() const;
  std::vector<Index> fixed_indices(int t) const;
  std::size_t hash() const;
  void validate(const CftocProblem& p) const;

  bool operator==(const WorkingSet& other) const = default;
};

/// The UFTOC problem induced by a working set together with the fixed parts.
struct Partition {
  UftocProblem uftoc;
  std::vector<FixedInputStage> fixed;
};

Partition partition(const CftocProblem& p, const WorkingSet& ws);

/// Inputs of the full problem from the free inputs w and the bound values.
std::vector<Vector> assemble_inputs(const CftocProblem& p, const WorkingSet& ws,
                                    const std::vector<Vector>& w);

std::vector<Vector> simulate(const CftocProblem& p, const std::vector<Vector>& u);
double objective(const CftocProblem& p, const std::vector<Vector>& x, const std::vector<Vector>& u);
double max_bound_violation(const CftocProblem& p, const std::vector<Vector>& u);

/// Bound multipliers made nonnegative-when-optimal: the raw gradient for
/// lower bounds and its negation for upper bounds; zero for free inputs.
std::vector<Vector> signed_multipliers(const WorkingSet& ws, const std::vector<Vector>& raw);

/// Norm of the KKT residual of the constrained problem (stationarity,
/// dynamics, complementarity, and negative parts of multipliers and slacks).
double kkt_residual(const CftocProblem& p, const std::vector<Vector>& x,
                    const std::vector<Vector>& u, const std::vector<Vector>& lambda,
                    const WorkingSet& ws, const std::vector<Vector>& mu);

struct InputRef {
  int stage = 0;
  Index index = 0;
  auto operator<=>(const InputRef&) const = default;
};

struct StepDecision {
  enum class Kind { Optimal, Remove, Block };
  Kind kind = Kind::Optimal;
  double alpha = 1.0;
  std::vector<InputRef> inputs;   // constraints to remove or blocking ones to add
  std::vector<Bound> sides;       // side of each blocking constraint
};

/// Given the current point `u`, the working-set solution `u_hat` and its
/// signed multipliers, decides between optimality, removal of the most
/// negative multiplier (all negative ones in batch mode) and a blocked step.
/// Ties are broken towards the lowest (stage, index).
StepDecision optimality_check(const CftocProblem& p, const WorkingSet& ws,
                              const std::vector<Vector>& u, const std::vector<Vector>& u_hat,
                              const std::vector<Vector>& mu, double tol, bool batch = false);

struct AsOptions {
  double tol = 1e-8;
  int max_iter = 0;   // 0 means 50 * total inputs
  bool use_modification = true;
  bool batch = false;
  double fallback_ratio = 0.5;
  /// Compares the held factorization with a fresh one after every
  /// modification and throws if they differ by more than 1e-8.
  bool check_factorization = false;
  RiccatiOptions riccati;
};

struct IterationReport {
  StepDecision::Kind kind = StepDecision::Kind::Optimal;
  std::vector<InputRef> changed;
  double alpha = 1.0;
  double objective = 0.0;
  double max_violation = 0.0;
  Index rank = 0;
  bool modified = false;
  bool fallback = false;
};

struct AsSolution {
  std::vector<Vector> x;
  std::vector<Vector> u;
  std::vector<Vector> lambda;
  std::vector<Vector> mu;   // signed multipliers, zero on free inputs
  WorkingSet working_set;
  int iterations = 0;
  double objective = 0.0;
  std::vector<IterationReport> reports;
};

AsSolution solve(const CftocProblem& p, const WorkingSet& init, const AsOptions& opts = {});
inline AsSolution solve(const CftocProblem& p, const AsOptions& opts = {}) {
  return solve(p, WorkingSet::all_free(p), opts);
}

}  // namespace modric
