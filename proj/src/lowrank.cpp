#include "modric/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace modric {

namespace {

std::vector<Index> complement(Index n, const std::vector<Index>& removed) {
  std::vector<Index> kept;
  kept.reserve(static_cast<std::size_t>(n));
  std::size_t j = 0;
  for (Index i = 0; i < n; ++i) {
    if (j < removed.size() && removed[j] == i) {
      ++j;
      continue;
    }
    kept.push_back(i);
  }
  return kept;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix bordered(const Matrix& top_left, const Matrix& top_right, const Matrix& bottom_right) {
  const Index n = top_left.rows();
  const Index k = bottom_right.rows();
  Matrix out(n + k, n + k);
  out.topLeftCorner(n, n) = top_left;
  out.topRightCorner(n, k) = top_right;
  out.bottomLeftCorner(k, n) = top_right.transpose();
  out.bottomRightCorner(k, k) = bottom_right;
  return out;
}

double pivot_rel(const StepOptions& opts, Index dim) {
  const double rel = opts.riccati.factor.pd_pivot_rel;
  return rel >= 0.0 ? rel : default_rel_tol(dim);
}

// Rough condition estimate of the old G measured against the larger of the
// old and modified diagonals.
bool smw_usable(const RiccatiStage& st, const Matrix& g_new, const StepOptions& opts) {
  if (!opts.use_smw || !st.g_factor.is_cholesky() || st.g_factor.dim() == 0) return false;
  const Vector d = st.g_factor.lower().diagonal().cwiseAbs();
  const double scale = std::max(st.G.diagonal().maxCoeff(), g_new.diagonal().maxCoeff());
  const double min_pivot = d.minCoeff();
  return scale <= opts.smw_max_condition * min_pivot * min_pivot;
}

// Empty modification of a given sign, used when the incoming one is absent.
Matrix incoming_v(const Modification* m, Index n) { return m ? m->V : Matrix(n, 0); }

Matrix incoming_c(const Modification* m) { return m ? m->C : Matrix(0, 0); }

Matrix apply_core_sqrt(const Modification* m, const Matrix& x) {
  return m ? m->c_factor.pinv_sqrt_apply(x) : Matrix(x.rows(), 0);
}

StageStepResult downdate_step(const UftocStage& s, const RiccatiStage& st, const Matrix& p_t,
                              const Matrix* p_next, const AppendedColumns* cols,
                              const Modification* m, const StepOptions& opts) {
  if (m && m->sign != Sign::Downdate) throw Error(ErrorCode::InvalidDelta, "expected a downdate");
  const Index n = s.A.rows();
  const Index nw = st.G.rows();
  const Index k = cols ? cols->count() : 0;
  const Matrix v_in = incoming_v(m, n);

  Matrix h(n, k), g(nw, k), g0(k, k), b(n, k);
  if (k > 0) {
    b = cols->b;
    const Matrix pb = (*p_next) * b;
    h = cols->q_xw + s.A.transpose() * pb;
    g = cols->q_w + s.Bw.transpose() * pb;
    g0 = symmetrized(cols->q_w0 + b.transpose() * pb);
  }
  const Matrix at_v = s.A.transpose() * v_in;
  const Matrix bt_v = s.Bw.transpose() * v_in;
  const Matrix b_new_t_v = b.transpose() * v_in;

  // New modification of P_t, built from the unmodified G, H.
  const Matrix e = hcat(g, bt_v);
  const Matrix x = st.g_factor.pseudo_solve(e);
  Matrix v_out = hcat(h, at_v) - st.H * x;
  Matrix c_out = symmetrized(bordered(g0, b_new_t_v, incoming_c(m)) - e.transpose() * x);

  StageStepResult r;
  r.out = make_modification(Sign::Downdate, std::move(v_out), std::move(c_out),
                            m ? m->stage - 1 : -1, opts.riccati.factor, opts.range_tol);
  const Matrix w = r.out.c_factor.pinv_sqrt_apply(r.out.V);
  r.P = symmetrized(p_t - w * w.transpose());

  // Modified stage blocks: G~ = [[G, g], [g^T, g0]] - U U^T, with U = [Bw b]^T S.
  const Matrix z = apply_core_sqrt(m, at_v);
  Matrix u(nw + k, z.cols());
  u.topRows(nw) = apply_core_sqrt(m, bt_v);
  u.bottomRows(k) = apply_core_sqrt(m, b_new_t_v);

  auto& out = r.stage;
  out.F = symmetrized(st.F - z * z.transpose());
  out.G = symmetrized(bordered(st.G, g, g0) - u * u.transpose());
  out.H = hcat(st.H, h) - z * u.transpose();

  bool have_factor = false;
  if (st.g_factor.is_cholesky()) {
    Matrix l = st.g_factor.lower();
    const double rel = pivot_rel(opts, nw + k);
    bool ok = k == 0 || chol_append(l, g, g0, rel);
    const double tol = rel * out.G.trace();
    for (Index j = 0; ok && j < u.cols(); ++j) ok = chol_downdate_inplace(l, u.col(j), tol);
    if (ok) {
      out.g_factor = PsdFactorization::from_cholesky(std::move(l));
      have_factor = true;
    }
  }
  if (!have_factor) out.g_factor = factor_psd(out.G, opts.riccati.factor, std::max(st.G.norm(), out.G.norm()));

  if (k == 0 && m && out.g_factor.is_cholesky() && smw_usable(st, out.G, opts)) {
    try {
      const SmwSolver smw(st.g_factor, bt_v, m->c_factor, Sign::Downdate);
      // G^{-1} H~^T = -K - G^{-1} U Z^T
      const Matrix base = -st.K - smw.base_inv_scaled_u() * z.transpose();
      out.K = -smw.solve_from_base(base);
      return r;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InnerSystemSingular) throw;
    }
  }
  out.K = -out.g_factor.pseudo_solve(out.H.transpose());
  return r;
}

StageStepResult update_step(const UftocStage& s, const RiccatiStage& st, const Matrix& p_t,
                            const std::vector<Index>& removed, const Modification* m,
                            const StepOptions& opts) {
  if (m && m->sign != Sign::Update) throw Error(ErrorCode::InvalidDelta, "expected an update");
  const Index n = s.A.rows();
  const Index nw = st.G.rows();
  const Index k = static_cast<Index>(removed.size());
  const std::vector<Index> kept = complement(nw, removed);
  const Matrix v_in = incoming_v(m, n);

  const Matrix at_v = s.A.transpose() * v_in;
  const Matrix bt_v_full = s.Bw.transpose() * v_in;
  const Matrix z = apply_core_sqrt(m, at_v);
  const Matrix u_full = apply_core_sqrt(m, bt_v_full);

  // Blocks of the problem with the update applied but no input fixed yet.
  const Matrix g_full = symmetrized(st.G + u_full * u_full.transpose());
  const Matrix h_full = st.H + z * u_full.transpose();

  StageStepResult r;
  auto& out = r.stage;
  out.F = symmetrized(st.F + z * z.transpose());
  out.G = g_full(kept, kept);
  out.H = h_full(Eigen::all, kept);
  const Matrix g = g_full(kept, removed);
  const Matrix g0 = g_full(removed, removed);
  const Matrix h = h_full(Eigen::all, removed);

  if (st.g_factor.is_cholesky()) {
    Matrix l = k > 0 ? chol_delete(st.g_factor.lower(), removed) : st.g_factor.lower();
    const Matrix u_kept = u_full(kept, Eigen::all);
    for (Index j = 0; j < u_kept.cols(); ++j) chol_update_inplace(l, u_kept.col(j));
    out.g_factor = PsdFactorization::from_cholesky(std::move(l));
  } else {
    out.g_factor = factor_psd(out.G, opts.riccati.factor, std::max(st.G.norm(), g_full.norm()));
  }

  // New modification of P_t, built from the modified G~, H~.
  const Matrix bt_v_kept = bt_v_full(kept, Eigen::all);
  const Matrix b_rem_t_v = bt_v_full(removed, Eigen::all);
  const Matrix e = hcat(g, bt_v_kept);
  const Matrix x = out.g_factor.pseudo_solve(e);
  Matrix v_out = hcat(h, at_v) - out.H * x;
  Matrix c_out = symmetrized(bordered(g0, b_rem_t_v, incoming_c(m)) - e.transpose() * x);
  r.out = make_modification(Sign::Update, std::move(v_out), std::move(c_out),
                            m ? m->stage - 1 : -1, opts.riccati.factor, opts.range_tol);
  const Matrix w = r.out.c_factor.pinv_sqrt_apply(r.out.V);
  r.P = symmetrized(p_t + w * w.transpose());

  if (k == 0 && m && smw_usable(st, out.G, opts)) {
    try {
      const SmwSolver smw(st.g_factor, bt_v_full, m->c_factor, Sign::Update);
      const Matrix base = -st.K + smw.base_inv_scaled_u() * z.transpose();
      out.K = -smw.solve_from_base(base);
      return r;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InnerSystemSingular) throw;
    }
  }
  out.K = -out.g_factor.pseudo_solve(out.H.transpose());
  return r;
}

}  // namespace

Matrix Modification::term() const {
  const Matrix w = c_factor.pinv_sqrt_apply(V);
  return w * w.transpose();
}

Modification make_modification(Sign sign, Matrix v, Matrix c, int stage, const FactorOptions& fopts,
                               double range_tol) {
  if (c.rows() != c.cols() || c.rows() != v.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "modification V/C sizes", stage);
  }
  Modification m;
  m.sign = sign;
  m.stage = stage;
  try {
    m.c_factor = factor_psd(c, fopts);
  } catch (const Error& e) {
    throw Error(e.code(), "modification core: " + e.message(), stage);
  }
  if (!m.c_factor.is_cholesky() && m.c_factor.rank() < m.c_factor.dim()) {
    // Rows of V must have no component along the null space of C.
    const auto& vals = m.c_factor.eigenvalues();
    const auto& vecs = m.c_factor.eigenvectors();
    double leak = 0.0;
    for (Index i = 0; i < vals.size(); ++i) {
      if (vals(i) == 0.0) leak = std::max(leak, (v * vecs.col(i)).norm());
    }
    if (leak > range_tol * (1.0 + v.norm())) {
      throw Error(ErrorCode::RangeConditionViolated,
                  "V^T not in range(C), leak " + std::to_string(leak), stage);
    }
  }
  m.V = std::move(v);
  m.C = std::move(c);
  return m;
}

AppendedColumns AppendedColumns::trailing(const UftocStage& after, Index k) {
  const Index nw = after.nw();
  if (k < 0 || k > nw) throw Error(ErrorCode::DimensionMismatch, "appended column count");
  AppendedColumns c;
  c.b = after.Bw.rightCols(k);
  c.q_xw = after.Qxw.rightCols(k);
  c.q_w = after.Qw.topRightCorner(nw - k, k);
  c.q_w0 = after.Qw.bottomRightCorner(k, k);
  return c;
}

StageStepResult propagate_downdate(const UftocStage& s, const RiccatiStage& st, const Matrix& p_t,
                                   const Modification& m, const StepOptions& opts) {
  return downdate_step(s, st, p_t, nullptr, nullptr, &m, opts);
}

StageStepResult propagate_update(const UftocStage& s, const RiccatiStage& st, const Matrix& p_t,
                                 const Modification& m, const StepOptions& opts) {
  return update_step(s, st, p_t, {}, &m, opts);
}

StageStepResult remove_constraints_step(const UftocStage& s, const RiccatiStage& st,
                                        const Matrix& p_t, const Matrix& p_next,
                                        const AppendedColumns& cols, const Modification* m,
                                        const StepOptions& opts) {
  if (cols.b.rows() != s.A.rows() || cols.q_w.rows() != st.G.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "appended columns do not match the stage");
  }
  return downdate_step(s, st, p_t, &p_next, &cols, m, opts);
}

StageStepResult add_constraints_step(const UftocStage& s, const RiccatiStage& st,
                                     const Matrix& p_t, const std::vector<Index>& removed,
                                     const Modification* m, const StepOptions& opts) {
  for (std::size_t i = 0; i < removed.size(); ++i) {
    if (removed[i] < 0 || removed[i] >= st.G.rows() || (i > 0 && removed[i] <= removed[i - 1])) {
      throw Error(ErrorCode::InvalidDelta, "removed positions must be ascending and in range");
    }
  }
  return update_step(s, st, p_t, removed, m, opts);
}

int WorkingSetDelta::t_max() const {
  int t = -1;
  for (const auto& c : changes) t = std::max(t, c.stage);
  return t;
}

void validate_delta(const UftocProblem& before, const UftocProblem& after,
                    const WorkingSetDelta& delta) {
  const int n_stages = before.horizon();
  if (after.horizon() != n_stages) throw Error(ErrorCode::InvalidDelta, "horizon changed");
  std::vector<const StageChange*> at(static_cast<std::size_t>(n_stages), nullptr);
  for (const auto& c : delta.changes) {
    if (c.stage < 0 || c.stage >= n_stages) throw Error(ErrorCode::InvalidDelta, "stage out of range", c.stage);
    if (at[c.stage]) throw Error(ErrorCode::InvalidDelta, "stage listed twice", c.stage);
    if (c.positions.empty()) throw Error(ErrorCode::InvalidDelta, "empty stage change", c.stage);
    at[c.stage] = &c;
  }
  for (int t = 0; t < n_stages; ++t) {
    const Index nb = before.stages[t].nw();
    const Index na = after.stages[t].nw();
    const StageChange* c = at[t];
    if (!c) {
      if (na != nb) throw Error(ErrorCode::InvalidDelta, "input count changed without a delta entry", t);
      continue;
    }
    const Index k = static_cast<Index>(c->positions.size());
    if (delta.kind == DeltaKind::Remove) {
      if (na != nb + k) throw Error(ErrorCode::InvalidDelta, "removal must append inputs", t);
      for (Index i = 0; i < k; ++i) {
        if (c->positions[i] != nb + i) {
          throw Error(ErrorCode::InvalidDelta, "freed inputs must be the trailing positions", t);
        }
      }
    } else {
      if (na != nb - k) throw Error(ErrorCode::InvalidDelta, "addition must delete inputs", t);
      for (Index i = 0; i < k; ++i) {
        const Index pos = c->positions[i];
        if (pos < 0 || pos >= nb || (i > 0 && pos <= c->positions[i - 1])) {
          throw Error(ErrorCode::InvalidDelta, "fixed positions must be ascending and in range", t);
        }
      }
    }
  }
}

ModifyReport modify_factorization(const UftocProblem& before, const UftocProblem& after,
                                  RiccatiFactorization& f, const WorkingSetDelta& delta,
                                  const ModifyOptions& opts) {
  validate_delta(before, after, delta);
  ModifyReport rep;
  if (delta.empty()) return rep;

  const int t_m = delta.t_max();
  rep.t_max = t_m;
  rep.ranks.assign(static_cast<std::size_t>(t_m + 1), 0);
  std::vector<const StageChange*> at(static_cast<std::size_t>(t_m + 1), nullptr);
  for (const auto& c : delta.changes) at[c.stage] = &c;

  const double rank_limit = opts.fallback_ratio * static_cast<double>(before.nx());
  std::optional<Modification> m;
  Matrix p_next_old;  // unmodified P_{t+1}, needed when inputs are freed
  const Matrix* p_next = &f.P[t_m + 1];

  for (int t = t_m; t >= 0; --t) {
    if (t < t_m && m && static_cast<double>(m->cols()) >= rank_limit) {
      refactorize_below(after, f, t, opts.step.riccati);
      rep.fallback = true;
      rep.fallback_stage = t;
      break;
    }
    const StageChange* c = at[t];
    const Modification* mp = m ? &*m : nullptr;
    StageStepResult r;
    try {
      if (!c) {
        r = delta.kind == DeltaKind::Remove
                ? propagate_downdate(before.stages[t], f.stages[t], f.P[t], *m, opts.step)
                : propagate_update(before.stages[t], f.stages[t], f.P[t], *m, opts.step);
      } else if (delta.kind == DeltaKind::Remove) {
        const auto cols = AppendedColumns::trailing(after.stages[t], static_cast<Index>(c->positions.size()));
        r = remove_constraints_step(before.stages[t], f.stages[t], f.P[t], *p_next, cols, mp, opts.step);
      } else {
        r = add_constraints_step(before.stages[t], f.stages[t], f.P[t], c->positions, mp, opts.step);
      }
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), t);
    }
    r.out.stage = t;
    p_next_old = std::move(f.P[t]);
    p_next = &p_next_old;
    f.P[t] = std::move(r.P);
    f.stages[t] = std::move(r.stage);
    m = std::move(r.out);
    rep.ranks[t] = m->cols();
  }
  return rep;
}

RefreshedSolution refresh_solution(const UftocProblem& after, const RiccatiFactorization& f,
                                   BackwardPass& b, int t_max,
                                   const std::vector<FixedInputStage>* fixed,
                                   const RiccatiOptions& opts) {
  backward_below(after, f, b, std::min(t_max, after.horizon() - 1), opts);
  RefreshedSolution out;
  out.traj = forward(after, f, b);
  if (fixed) out.mu = dual_forward(*fixed, out.traj);
  return out;
}

}  // namespace modric
