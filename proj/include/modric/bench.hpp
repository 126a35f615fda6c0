#pragma once

// Random problem generation and the modify-versus-recompute benchmark.

#include <cstdint>
#include <string>
#include <vector>

#include "modric/asqp.hpp"

namespace modric {

enum class Convexity { Strict, Semidefinite };

struct GenOptions {
  Convexity convexity = Convexity::Strict;
  double mu = 1e-3;               // diagonal shift of strictly convex stage costs
  double active_fraction = 0.2;   // share of inputs whose bound cuts the unconstrained optimum
};

/// Deterministic in `seed`. Stage costs are R^T R / dim (+ mu I when strict);
/// semidefinite costs use R with fewer than nw rows and consistent linear terms.
UftocProblem gen_uftoc(std::uint64_t seed, int horizon, Index nx, Index nw, const GenOptions& opts = {});

/// Box-constrained variant whose bounds are placed around the unconstrained
/// optimum so that roughly `active_fraction` of them bind.
CftocProblem gen_cftoc(std::uint64_t seed, int horizon, Index nx, Index nu, const GenOptions& opts = {});

struct TmPolicy {
  enum class Kind { First, Last, Fraction };
  Kind kind = Kind::Last;
  double fraction = 0.0;

  int stage(int horizon) const;
  std::string to_string() const;
  /// Parses "first", "last" or "frac:<f>" with f in [0, 1].
  static TmPolicy parse(const std::string& text);
};

struct BenchScenario {
  std::uint64_t seed = 1;
  int horizon = 10;
  std::vector<Index> sizes{10};
  TmPolicy tm;
  int reps = 1;
  int inner_repeats = 3;
  bool use_modification = true;
  double tol = 1e-8;
  double fallback_ratio = 0.5;
  Convexity convexity = Convexity::Strict;
};

/// Log-spaced integer sizes in [lo, hi], ascending and without duplicates.
std::vector<Index> log_spaced_sizes(Index lo, Index hi, int count);

struct BenchRecord {
  Index size = 0;
  int horizon = 0;
  int tm = 0;
  int rep = 0;
  std::int64_t t_recompute_ns = 0;
  std::int64_t t_modify_ns = 0;
  double resid_recompute = 0.0;
  double resid_modify = 0.0;
  Index rank = 0;
  bool fallback = false;
  double max_p_diff = 0.0;   // relative P difference between both paths
  std::string error;         // set on the diagnostic row of an aborted run
};

/// Timing and residuals of one instance: `before` has one input of stage tm
/// fixed, `after` frees it.
BenchRecord measure(const UftocProblem& before, const UftocProblem& after, const WorkingSetDelta& delta,
                    int inner_repeats, bool use_modification, double fallback_ratio = 0.5);

/// Pair of problems for a single removal at stage tm.
struct RemovalInstance {
  UftocProblem before;
  UftocProblem after;
  WorkingSetDelta delta;
};
RemovalInstance removal_instance(std::uint64_t seed, int horizon, Index n, int tm,
                                 Convexity convexity = Convexity::Strict);

/// A solver error ends the run; the last row then carries the message and NaN residuals.
std::vector<BenchRecord> run_benchmark(const BenchScenario& s);

extern const char* const kCsvHeader;
void write_csv(const std::vector<BenchRecord>& records, const std::string& path);
std::vector<BenchRecord> read_csv(const std::string& path);
/// Scenario echo plus a summary of the run.
void write_sidecar(const BenchScenario& s, const std::vector<BenchRecord>& records, const std::string& path);

struct VerifyReport {
  std::size_t rows = 0;
  double max_residual = 0.0;
  double max_p_diff = 0.0;
  std::size_t worst_row = 0;
  bool passed = true;
  std::string warning;
};

/// Throws ThresholdExceeded (naming the worst row) when `throw_on_failure`.
VerifyReport verify_residuals(const std::vector<BenchRecord>& records, double tol,
                              bool throw_on_failure = false);

}  // namespace modric
