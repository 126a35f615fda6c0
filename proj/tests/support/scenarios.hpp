#pragma once

// Random before/after problem pairs for working-set changes and a comparison
// of a modified factorization with a fresh one.

#include <utility>
#include <vector>

#include "modric/lowrank.hpp"
#include "oracles.hpp"

namespace modric::testing {

UftocStage without_inputs(const UftocStage& s, const std::vector<Index>& removed);

double rel(const Matrix& a, const Matrix& b);

struct Comparison {
  double p_err = 0.0;
  double gain_err = 0.0;
  double blocks_err = 0.0;
};

Comparison compare(const RiccatiFactorization& modified, const RiccatiFactorization& fresh);

/// `full` has all inputs, the reduced problem lacks the listed ones
/// (stage, count). Remove turns reduced into full, Add the other way round.
struct Scenario {
  UftocProblem before;
  UftocProblem after;
  WorkingSetDelta delta;
};

Scenario make_scenario(Rng& rng, DeltaKind kind, int horizon, Index nx, Index max_nw, bool singular,
                       std::vector<std::pair<int, Index>> changes);

}  // namespace modric::testing
