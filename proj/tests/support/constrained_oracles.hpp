#pragma once

// Dense reference formulations of the constrained problems, plus random
// instance generators used across the constrained tests.

#include "modric/dualize.hpp"
#include "oracles.hpp"

namespace modric::testing {

/// Variables ordered x_0..x_N, u_0..u_{N-1}.
DenseQp dense_qp(const CftocProblem& p);
DenseQp dense_qp(const GeneralCftoc& p);

/// Splits a dense QP solution back into trajectories.
struct DenseTrajectory {
  std::vector<Vector> x;
  std::vector<Vector> u;
};
DenseTrajectory split(const CftocProblem& p, const Vector& y);
DenseTrajectory split(const GeneralCftoc& p, const Vector& y);

/// Strictly convex box-constrained instance; bounds straddle zero and some
/// are infinite.
CftocProblem random_cftoc(Rng& rng, int horizon, Index nx, Index max_nu);

/// Strictly convex instance with fewer constraints than inputs per stage and
/// at most one terminal constraint. The constraints hold strictly at a random
/// reference trajectory.
GeneralCftoc random_general(Rng& rng, int horizon, Index nx, Index max_nu);

}  // namespace modric::testing
