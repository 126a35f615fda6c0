#include "modric/asqp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <unordered_set>

namespace modric {

Index CftocProblem::total_inputs() const {
  Index n = 0;
  for (const auto& s : stages) n += s.nu();
  return n;
}

void CftocProblem::validate(bool check_psd, double psd_tol) const {
  UftocProblem u;
  u.QxN = QxN;
  u.lxN = lxN;
  u.cN = cN;
  u.x0 = x0;
  for (int t = 0; t < horizon(); ++t) {
    const auto& s = stages[t];
    if (s.umin.size() != s.nu() || s.umax.size() != s.nu()) {
      throw Error(ErrorCode::DimensionMismatch, "bound sizes", t);
    }
    for (Index i = 0; i < s.nu(); ++i) {
      if (std::isnan(s.umin(i)) || std::isnan(s.umax(i)) || s.umin(i) > s.umax(i)) {
        throw Error(ErrorCode::InvalidProblem, "umin must not exceed umax", t);
      }
    }
    u.stages.push_back({s.A, s.B, s.a, s.Qx, s.Qxu, s.Qu, s.lx, s.lu, s.c});
  }
  u.validate(check_psd, psd_tol);
}

WorkingSet WorkingSet::all_free(const CftocProblem& p) {
  std::vector<std::vector<Bound>> status;
  for (const auto& s : p.stages) status.emplace_back(static_cast<std::size_t>(s.nu()), Bound::Free);
  return from_status(std::move(status));
}

WorkingSet WorkingSet::from_status(std::vector<std::vector<Bound>> status) {
  WorkingSet ws;
  ws.status = std::move(status);
  for (const auto& st : ws.status) {
    std::vector<Index> order;
    for (std::size_t i = 0; i < st.size(); ++i)
      if (st[i] == Bound::Free) order.push_back(static_cast<Index>(i));
    ws.free_order.push_back(std::move(order));
  }
  return ws;
}

std::size_t WorkingSet::active_count() const {
  std::size_t n = 0;
  for (const auto& st : status) n += static_cast<std::size_t>(std::count_if(st.begin(), st.end(), [](Bound b) { return b != Bound::Free; }));
  return n;
}

std::vector<Index> WorkingSet::fixed_indices(int t) const {
  std::vector<Index> out;
  const auto& st = status[static_cast<std::size_t>(t)];
  for (std::size_t i = 0; i < st.size(); ++i)
    if (st[i] != Bound::Free) out.push_back(static_cast<Index>(i));
  return out;
}

std::size_t WorkingSet::hash() const {
  std::size_t h = 1469598103934665603ull;
  auto mix = [&h](std::size_t v) { h = (h ^ v) * 1099511628211ull; };
  for (const auto& st : status) {
    mix(0xabcdu);
    for (Bound b : st) mix(static_cast<std::size_t>(b));
  }
  for (const auto& order : free_order) {
    mix(0x1234u);
    for (Index i : order) mix(static_cast<std::size_t>(i));
  }
  return h;
}

void WorkingSet::validate(const CftocProblem& p) const {
  if (status.size() != p.stages.size() || free_order.size() != p.stages.size()) {
    throw Error(ErrorCode::DimensionMismatch, "working set horizon");
  }
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    const auto& st = status[t];
    if (static_cast<Index>(st.size()) != s.nu()) throw Error(ErrorCode::DimensionMismatch, "working set size", t);
    std::vector<bool> seen(st.size(), false);
    for (Index i : free_order[t]) {
      if (i < 0 || i >= s.nu() || seen[i] || st[i] != Bound::Free) {
        throw Error(ErrorCode::InvalidDelta, "free order does not match the statuses", t);
      }
      seen[i] = true;
    }
    for (std::size_t i = 0; i < st.size(); ++i) {
      if (st[i] == Bound::Free && !seen[i]) throw Error(ErrorCode::InvalidDelta, "free input missing from order", t);
      if (st[i] == Bound::Lower && !std::isfinite(s.umin(i))) throw Error(ErrorCode::InvalidDelta, "fixed at an infinite bound", t);
      if (st[i] == Bound::Upper && !std::isfinite(s.umax(i))) throw Error(ErrorCode::InvalidDelta, "fixed at an infinite bound", t);
    }
  }
}

namespace {

double bound_value(const CftocStage& s, Bound b, Index i) { return b == Bound::Lower ? s.umin(i) : s.umax(i); }

}  // namespace

Partition partition(const CftocProblem& p, const WorkingSet& ws) {
  ws.validate(p);
  Partition out;
  auto& u = out.uftoc;
  u.QxN = p.QxN;
  u.lxN = p.lxN;
  u.cN = p.cN;
  u.x0 = p.x0;
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    const auto& free = ws.free_order[t];
    const auto fixed = ws.fixed_indices(t);
    Vector v(static_cast<Index>(fixed.size()));
    for (std::size_t j = 0; j < fixed.size(); ++j) v(j) = bound_value(s, ws.status[t][fixed[j]], fixed[j]);

    FixedInputStage fs;
    fs.free_idx = free;
    fs.fixed_idx = fixed;
    fs.Bv = s.B(Eigen::all, fixed);
    fs.Qxv = s.Qxu(Eigen::all, fixed);
    fs.Qwv = s.Qu(free, fixed);
    fs.Qv = s.Qu(fixed, fixed);
    fs.lv = s.lu(fixed);
    fs.v = v;

    UftocStage us;
    us.A = s.A;
    us.Bw = s.B(Eigen::all, free);
    us.a = s.a + fs.Bv * v;
    us.Qx = s.Qx;
    us.Qxw = s.Qxu(Eigen::all, free);
    us.Qw = s.Qu(free, free);
    us.lx = s.lx + fs.Qxv * v;
    us.lw = Vector(s.lu(free)) + fs.Qwv * v;
    us.c = s.c + 0.5 * v.dot(fs.Qv * v) + fs.lv.dot(v);
    u.stages.push_back(std::move(us));
    out.fixed.push_back(std::move(fs));
  }
  return out;
}

std::vector<Vector> assemble_inputs(const CftocProblem& p, const WorkingSet& ws,
                                    const std::vector<Vector>& w) {
  std::vector<Vector> u(p.stages.size());
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    u[t].resize(s.nu());
    const auto& free = ws.free_order[t];
    for (std::size_t j = 0; j < free.size(); ++j) u[t](free[j]) = w[t](static_cast<Index>(j));
    for (Index i = 0; i < s.nu(); ++i)
      if (ws.status[t][i] != Bound::Free) u[t](i) = bound_value(s, ws.status[t][i], i);
  }
  return u;
}

std::vector<Vector> simulate(const CftocProblem& p, const std::vector<Vector>& u) {
  std::vector<Vector> x(p.stages.size() + 1);
  x[0] = p.x0;
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    x[t + 1] = s.A * x[t] + s.B * u[t] + s.a;
  }
  return x;
}

double objective(const CftocProblem& p, const std::vector<Vector>& x, const std::vector<Vector>& u) {
  double j = 0.0;
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    j += 0.5 * x[t].dot(s.Qx * x[t]) + x[t].dot(s.Qxu * u[t]) + 0.5 * u[t].dot(s.Qu * u[t]) +
         s.lx.dot(x[t]) + s.lu.dot(u[t]) + s.c;
  }
  const Vector& xn = x.back();
  return j + 0.5 * xn.dot(p.QxN * xn) + p.lxN.dot(xn) + p.cN;
}

double max_bound_violation(const CftocProblem& p, const std::vector<Vector>& u) {
  double v = 0.0;
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    for (Index i = 0; i < s.nu(); ++i) v = std::max({v, s.umin(i) - u[t](i), u[t](i) - s.umax(i)});
  }
  return v;
}

std::vector<Vector> signed_multipliers(const WorkingSet& ws, const std::vector<Vector>& raw) {
  std::vector<Vector> mu(raw.size());
  for (std::size_t t = 0; t < raw.size(); ++t) {
    mu[t] = Vector::Zero(raw[t].size());
    for (Index i = 0; i < raw[t].size(); ++i) {
      const Bound b = ws.status[t][i];
      if (b == Bound::Lower) mu[t](i) = raw[t](i);
      else if (b == Bound::Upper) mu[t](i) = -raw[t](i);
    }
  }
  return mu;
}

double kkt_residual(const CftocProblem& p, const std::vector<Vector>& x,
                    const std::vector<Vector>& u, const std::vector<Vector>& lambda,
                    const WorkingSet& ws, const std::vector<Vector>& mu) {
  const int n_stages = p.horizon();
  double sq = (x[0] - p.x0).squaredNorm();
  for (int t = 0; t < n_stages; ++t) {
    const auto& s = p.stages[t];
    sq += (s.Qx * x[t] + s.Qxu * u[t] + s.lx + s.A.transpose() * lambda[t + 1] - lambda[t]).squaredNorm();
    Vector gu = s.Qxu.transpose() * x[t] + s.Qu * u[t] + s.lu + s.B.transpose() * lambda[t + 1];
    for (Index i = 0; i < s.nu(); ++i) {
      const Bound b = ws.status[t][i];
      const double m = mu[t](i);
      if (b == Bound::Lower) {
        gu(i) -= m;
        sq += std::pow(m * (u[t](i) - s.umin(i)), 2);
      } else if (b == Bound::Upper) {
        gu(i) += m;
        sq += std::pow(m * (s.umax(i) - u[t](i)), 2);
      }
      sq += std::pow(std::min(m, 0.0), 2);
      sq += std::pow(std::max({0.0, s.umin(i) - u[t](i), u[t](i) - s.umax(i)}), 2);
    }
    sq += gu.squaredNorm();
    sq += (s.A * x[t] + s.B * u[t] + s.a - x[t + 1]).squaredNorm();
  }
  sq += (p.QxN * x[n_stages] + p.lxN - lambda[n_stages]).squaredNorm();
  return std::sqrt(sq);
}

StepDecision optimality_check(const CftocProblem& p, const WorkingSet& ws,
                              const std::vector<Vector>& u, const std::vector<Vector>& u_hat,
                              const std::vector<Vector>& mu, double tol, bool batch) {
  constexpr double tie = 1e-12;
  StepDecision d;
  double best = 1.0;
  struct Candidate {
    InputRef ref;
    Bound side;
    double alpha;
  };
  std::vector<Candidate> blocking;
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    for (Index i = 0; i < s.nu(); ++i) {
      if (ws.status[t][i] != Bound::Free) continue;
      const double step = u_hat[t](i) - u[t](i);
      if (std::abs(step) <= 1e-13 * (1.0 + std::abs(u[t](i)))) continue;
      double alpha = std::numeric_limits<double>::infinity();
      Bound side = Bound::Free;
      if (step < 0.0 && std::isfinite(s.umin(i))) {
        alpha = std::max(0.0, (s.umin(i) - u[t](i)) / step);
        side = Bound::Lower;
      } else if (step > 0.0 && std::isfinite(s.umax(i))) {
        alpha = std::max(0.0, (s.umax(i) - u[t](i)) / step);
        side = Bound::Upper;
      }
      if (alpha >= 1.0) continue;
      blocking.push_back({{t, i}, side, alpha});
      best = std::min(best, alpha);
    }
  }
  if (!blocking.empty()) {
    d.kind = StepDecision::Kind::Block;
    d.alpha = best;
    for (const auto& c : blocking) {
      if (c.alpha > best + tie) continue;
      d.inputs.push_back(c.ref);
      d.sides.push_back(c.side);
      if (!batch) break;
    }
    return d;
  }

  double most_negative = -tol;
  for (int t = 0; t < p.horizon(); ++t) {
    for (Index i = 0; i < mu[t].size(); ++i) {
      if (ws.status[t][i] == Bound::Free || mu[t](i) >= -tol) continue;
      if (batch) {
        d.inputs.push_back({t, i});
      } else if (mu[t](i) < most_negative) {
        most_negative = mu[t](i);
        d.inputs.assign(1, {t, i});
      }
    }
  }
  d.kind = d.inputs.empty() ? StepDecision::Kind::Optimal : StepDecision::Kind::Remove;
  return d;
}

namespace {

struct EqpState {
  Partition part;
  RiccatiFactorization f;
  BackwardPass b;
  Trajectory traj;
  std::vector<Vector> mu_raw;
};

void solve_fresh(EqpState& s, const RiccatiOptions& opts) {
  s.f = factorize(s.part.uftoc, opts);
  s.b = backward(s.part.uftoc, s.f, opts);
  s.traj = forward(s.part.uftoc, s.f, s.b);
  s.mu_raw = dual_forward(s.part.fixed, s.traj);
}

void check_against_fresh(const UftocProblem& p, const RiccatiFactorization& f, const RiccatiOptions& opts) {
  const auto fresh = factorize(p, opts);
  for (std::size_t t = 0; t < fresh.P.size(); ++t) {
    if ((f.P[t] - fresh.P[t]).norm() > 1e-8 * (1.0 + fresh.P[t].norm())) {
      throw Error(ErrorCode::ThresholdExceeded, "modified factorization differs from a fresh one", static_cast<int>(t));
    }
  }
}

}  // namespace

AsSolution solve(const CftocProblem& p, const WorkingSet& init, const AsOptions& opts) {
  p.validate();
  init.validate(p);
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : static_cast<int>(std::max<Index>(50 * p.total_inputs(), 50));
  ModifyOptions mopts;
  mopts.step.riccati = opts.riccati;
  mopts.fallback_ratio = opts.fallback_ratio;

  AsSolution sol;
  WorkingSet ws = init;
  EqpState eqp;
  eqp.part = partition(p, ws);

  auto run = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InfeasibleOrUnbounded) {
        throw Error(ErrorCode::UnboundedDirection, "search direction does not exist: " + e.message(), e.stage());
      }
      throw;
    }
  };
  run([&] { solve_fresh(eqp, opts.riccati); });

  std::vector<Vector> u_hat = assemble_inputs(p, ws, eqp.traj.w);
  std::vector<Vector> u = u_hat;
  for (int t = 0; t < p.horizon(); ++t) u[t] = u[t].cwiseMax(p.stages[t].umin).cwiseMin(p.stages[t].umax);

  double last_objective = objective(p, simulate(p, u), u);
  std::unordered_set<std::size_t> visited{ws.hash()};

  for (int iter = 1;; ++iter) {
    if (iter > max_iter) throw Error(ErrorCode::IterationLimit, "active-set iteration limit reached");
    const auto mu = signed_multipliers(ws, eqp.mu_raw);
    const auto d = optimality_check(p, ws, u, u_hat, mu, opts.tol, opts.batch);

    IterationReport rep;
    rep.kind = d.kind;
    rep.changed = d.inputs;
    rep.alpha = d.alpha;

    if (d.kind == StepDecision::Kind::Optimal) {
      sol.u = u_hat;
      sol.x = eqp.traj.x;
      sol.lambda = eqp.traj.lambda;
      sol.mu = mu;
      sol.working_set = ws;
      sol.iterations = iter;
      sol.objective = objective(p, sol.x, sol.u);
      rep.objective = sol.objective;
      rep.max_violation = max_bound_violation(p, sol.u);
      sol.reports.push_back(rep);
      return sol;
    }

    WorkingSet next = ws;
    WorkingSetDelta delta;
    std::map<int, std::vector<Index>> per_stage;
    if (d.kind == StepDecision::Kind::Remove) {
      u = u_hat;
      delta.kind = DeltaKind::Remove;
      for (const auto& r : d.inputs) {
        auto& order = next.free_order[r.stage];
        per_stage[r.stage].push_back(static_cast<Index>(order.size()));
        order.push_back(r.index);
        next.status[r.stage][r.index] = Bound::Free;
      }
    } else {
      for (int t = 0; t < p.horizon(); ++t) u[t] += d.alpha * (u_hat[t] - u[t]);
      delta.kind = DeltaKind::Add;
      for (std::size_t j = 0; j < d.inputs.size(); ++j) {
        const auto& r = d.inputs[j];
        const auto& order = ws.free_order[r.stage];
        const auto pos = std::find(order.begin(), order.end(), r.index) - order.begin();
        per_stage[r.stage].push_back(static_cast<Index>(pos));
        next.status[r.stage][r.index] = d.sides[j];
        u[r.stage](r.index) = bound_value(p.stages[r.stage], d.sides[j], r.index);
      }
      for (auto& [t, positions] : per_stage) {
        std::sort(positions.begin(), positions.end());
        auto& order = next.free_order[t];
        for (auto it = positions.rbegin(); it != positions.rend(); ++it) order.erase(order.begin() + *it);
      }
      for (int t = 0; t < p.horizon(); ++t) u[t] = u[t].cwiseMax(p.stages[t].umin).cwiseMin(p.stages[t].umax);
    }
    for (auto& [t, positions] : per_stage) delta.changes.push_back({t, positions});

    rep.objective = objective(p, simulate(p, u), u);
    rep.max_violation = max_bound_violation(p, u);

    if (rep.objective < last_objective - 1e-14 * (1.0 + std::abs(last_objective))) visited.clear();
    last_objective = std::min(last_objective, rep.objective);
    if (!visited.insert(next.hash()).second) throw Error(ErrorCode::CycleDetected, "working set repeated without progress");

    EqpState prev = std::move(eqp);
    eqp.part = partition(p, next);
    run([&] {
      if (!opts.use_modification) {
        solve_fresh(eqp, opts.riccati);
        return;
      }
      eqp.f = std::move(prev.f);
      eqp.b = std::move(prev.b);
      try {
        const auto mrep = modify_factorization(prev.part.uftoc, eqp.part.uftoc, eqp.f, delta, mopts);
        rep.modified = true;
        rep.fallback = mrep.fallback;
        for (Index r : mrep.ranks) rep.rank = std::max(rep.rank, r);
        if (opts.check_factorization) check_against_fresh(eqp.part.uftoc, eqp.f, opts.riccati);
        auto refreshed = refresh_solution(eqp.part.uftoc, eqp.f, eqp.b, mrep.t_max, &eqp.part.fixed, opts.riccati);
        eqp.traj = std::move(refreshed.traj);
        eqp.mu_raw = std::move(refreshed.mu);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::ThresholdExceeded || e.code() == ErrorCode::InfeasibleOrUnbounded) throw;
        rep.modified = false;
        rep.fallback = true;
        solve_fresh(eqp, opts.riccati);
      }
    });
    ws = std::move(next);
    u_hat = assemble_inputs(p, ws, eqp.traj.w);
    sol.reports.push_back(rep);
  }
}

}  // namespace modric
