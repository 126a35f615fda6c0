#pragma once

// Low-rank modification of an existing Riccati factorization after a
// working-set change, instead of re-factorizing from scratch.
//
// A modification of P_{t+1} has the form P~ = P -/+ V C^+ V^T. Going one
// stage back it produces a modification of P_t of the same form, with the
// column count growing by the number of inputs freed (or fixed) at stage t.
// Downdates (inputs freed) use the unmodified G, H of the stage; updates
// (inputs fixed) use the modified ones.

#include <optional>
#include <vector>

#include "modric/uftoc.hpp"

namespace modric {

struct Modification {
  Sign sign = Sign::Downdate;
  Matrix V;                    // nx x k
  Matrix C;                    // k x k, PSD
  PsdFactorization c_factor;
  int stage = 0;               // index of the modified P

  Index cols() const noexcept { return V.cols(); }
  bool empty() const noexcept { return V.cols() == 0; }
  /// V C^+ V^T
  Matrix term() const;
};

/// Factors C and checks that the rows of V lie in range(C).
Modification make_modification(Sign sign, Matrix v, Matrix c, int stage,
                               const FactorOptions& fopts = {}, double range_tol = 1e-6);

/// Columns appended to w_t when k inputs of stage t become free.
struct AppendedColumns {
  Matrix b;      // nx x k, new columns of Bw
  Matrix q_xw;   // nx x k
  Matrix q_w;    // nw x k, coupling with the inputs that were already free
  Matrix q_w0;   // k x k

  /// The last k columns of the post-change stage.
  static AppendedColumns trailing(const UftocStage& after, Index k);
  Index count() const noexcept { return b.cols(); }
};

struct StageStepResult {
  RiccatiStage stage;
  Matrix P;              // modified P_t
  Modification out;      // modification of P_t relative to the old P_t
};

struct StepOptions {
  RiccatiOptions riccati;
  bool use_smw = true;
  /// SMW gain solves are skipped when the Cholesky diagonal of the base G
  /// suggests a condition number above this.
  double smw_max_condition = 1e8;
  double range_tol = 1e-6;
};

StageStepResult propagate_downdate(const UftocStage& s, const RiccatiStage& st, const Matrix& p_t,
                                   const Modification& m, const StepOptions& opts = {});

StageStepResult propagate_update(const UftocStage& s, const RiccatiStage& st, const Matrix& p_t,
                                 const Modification& m, const StepOptions& opts = {});

/// Frees the inputs described by `cols` at stage t. `p_next` is the
/// unmodified P_{t+1}; `m` is the (downdate) modification of P_{t+1}, if any.
StageStepResult remove_constraints_step(const UftocStage& s, const RiccatiStage& st,
                                        const Matrix& p_t, const Matrix& p_next,
                                        const AppendedColumns& cols, const Modification* m,
                                        const StepOptions& opts = {});

/// Fixes the inputs at positions `removed` (ascending, into w_t) of stage t.
/// `m` is the (update) modification of P_{t+1}, if any.
StageStepResult add_constraints_step(const UftocStage& s, const RiccatiStage& st,
                                     const Matrix& p_t, const std::vector<Index>& removed,
                                     const Modification* m, const StepOptions& opts = {});

enum class DeltaKind { Remove, Add };

/// Positions are indices into w_t: for Remove, the trailing positions of the
/// appended inputs in the post-change problem; for Add, the positions in the
/// pre-change problem that are deleted.
struct StageChange {
  int stage = 0;
  std::vector<Index> positions;
};

struct WorkingSetDelta {
  DeltaKind kind = DeltaKind::Remove;
  std::vector<StageChange> changes;

  bool empty() const noexcept { return changes.empty(); }
  int t_max() const;
};

struct ModifyOptions {
  StepOptions step;
  /// Recompute the remaining stages once the modification has at least
  /// fallback_ratio * nx columns. Infinity disables the fallback.
  double fallback_ratio = 0.5;
};

struct ModifyReport {
  int t_max = -1;
  std::vector<Index> ranks;   // column count of the modification of P_t, t <= t_max
  bool fallback = false;
  int fallback_stage = -1;    // stages <= this were recomputed
};

/// Checks the delta against the problems before/after the change.
void validate_delta(const UftocProblem& before, const UftocProblem& after,
                    const WorkingSetDelta& delta);

/// Modifies `f` (a factorization of `before`) into a factorization of
/// `after`. Stages above t_max are not touched.
ModifyReport modify_factorization(const UftocProblem& before, const UftocProblem& after,
                                  RiccatiFactorization& f, const WorkingSetDelta& delta,
                                  const ModifyOptions& opts = {});

struct RefreshedSolution {
  Trajectory traj;
  std::vector<Vector> mu;
};

/// Re-runs the backward recursion for t <= t_max on the modified
/// factorization (updating `b` in place) and the forward recursions fully.
RefreshedSolution refresh_solution(const UftocProblem& after, const RiccatiFactorization& f,
                                   BackwardPass& b, int t_max,
                                   const std::vector<FixedInputStage>* fixed = nullptr,
                                   const RiccatiOptions& opts = {});

}  // namespace modric
