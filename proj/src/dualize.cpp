#include "modric/dualize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace modric {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

Matrix inverse_pd(const Matrix& q, const char* what, int stage) {
  if (q.rows() != q.cols()) throw Error(ErrorCode::DimensionMismatch, what, stage);
  require_finite(q, what);
  const Eigen::LLT<Matrix> llt(symmetrized(q));
  const double tol = default_rel_tol(q.rows()) * std::max(1.0, q.trace());
  if (llt.info() != Eigen::Success || (q.rows() > 0 && Matrix(llt.matrixL()).diagonal().array().square().minCoeff() <= tol)) {
    throw Error(ErrorCode::NotPd, std::string(what) + " is not positive definite", stage);
  }
  return symmetrized(llt.solve(Matrix::Identity(q.rows(), q.cols())));
}

void require(bool ok, const char* what, int stage) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what, stage);
}

}  // namespace

void GeneralCftoc::validate() const {
  const Index n = nx();
  for (int t = 0; t < horizon(); ++t) {
    const auto& s = stages[t];
    require(s.A.rows() == n && s.A.cols() == n, "A", t);
    require(s.B.rows() == n, "B", t);
    require(s.a.size() == n, "a", t);
    require(s.M.cols() == n, "M", t);
    require(s.Q.rows() == s.nz() + s.nu(), "Q", t);
    require(s.lz.size() == s.nz() && s.lu.size() == s.nu(), "linear terms", t);
    require(s.Hx.rows() == s.nc() && s.Hx.cols() == n, "Hx", t);
    require(s.Hu.rows() == s.nc() && s.Hu.cols() == s.nu(), "Hu", t);
    inverse_pd(s.Q, "stage cost", t);
  }
  require(MN.cols() == n && QzN.rows() == MN.rows() && lzN.size() == MN.rows(), "terminal cost", horizon());
  require(HxN.rows() == hN.size() && HxN.cols() == n, "terminal constraints", horizon());
  inverse_pd(QzN, "terminal cost", horizon());
}

Dualized build_dual(const GeneralCftoc& p) {
  p.validate();
  const int n = p.horizon();
  const Index nx = p.nx();
  Dualized out;
  auto& map = out.map;
  auto& d = out.dual;
  map.horizon = n;
  for (int t = 0; t <= n; ++t) {
    map.nz.push_back(p.nz(t));
    map.nc.push_back(p.nc(t));
  }
  map.QzN_inv = inverse_pd(p.QzN, "terminal cost", n);

  d.stages.resize(static_cast<std::size_t>(n + 1));
  {
    const Index nz = p.MN.rows(), nc = p.hN.size();
    auto& s = d.stages[0];
    s.A = Matrix::Zero(nx, nx);
    s.B.resize(nx, nz + nc);
    s.B << p.MN.transpose(), p.HxN.transpose();
    s.a = Vector::Zero(nx);
    s.Qx = Matrix::Zero(nx, nx);
    s.Qxu = Matrix::Zero(nx, nz + nc);
    s.Qu = Matrix::Zero(nz + nc, nz + nc);
    s.Qu.topLeftCorner(nz, nz) = map.QzN_inv;
    s.lx = Vector::Zero(nx);
    s.lu.resize(nz + nc);
    s.lu << -map.QzN_inv * p.lzN, -p.hN;
    s.c = 0.5 * p.lzN.dot(map.QzN_inv * p.lzN) - p.cN;
  }
  map.Qbar.resize(static_cast<std::size_t>(n));
  for (int t = n - 1; t >= 0; --t) {
    const auto& ps = p.stages[t];
    const Index nz = ps.nz(), nu = ps.nu(), nc = ps.nc();
    const Matrix qbar = inverse_pd(ps.Q, "stage cost", t);
    map.Qbar[t] = qbar;

    Matrix rx = Matrix::Zero(nz + nu, nx);
    rx.bottomRows(nu) = ps.B.transpose();
    Matrix ru = Matrix::Zero(nz + nu, nz + nc);
    ru.topLeftCorner(nz, nz) = -Matrix::Identity(nz, nz);
    ru.bottomRightCorner(nu, nc) = ps.Hu.transpose();
    Vector lp(nz + nu);
    lp << ps.lz, ps.lu;
    const Vector qlp = qbar * lp;

    auto& s = d.stages[static_cast<std::size_t>(n - t)];
    s.A = ps.A.transpose();
    s.B.resize(nx, nz + nc);
    s.B << ps.M.transpose(), ps.Hx.transpose();
    s.a = Vector::Zero(nx);
    s.Qx = symmetrized(rx.transpose() * qbar * rx);
    s.Qxu = rx.transpose() * qbar * ru;
    s.Qu = symmetrized(ru.transpose() * qbar * ru);
    s.lx = rx.transpose() * qlp - ps.a;
    s.lu = ru.transpose() * qlp;
    s.lu.tail(nc) -= ps.h;
    s.c = 0.5 * lp.dot(qlp) - ps.c;
  }
  for (int tau = 0; tau <= n; ++tau) {
    auto& s = d.stages[tau];
    const int t = n - tau;
    const Index nz = map.nz[t], nc = map.nc[t];
    s.umin.resize(nz + nc);
    s.umax = Vector::Constant(nz + nc, inf);
    s.umin.head(nz).setConstant(-inf);
    s.umin.tail(nc).setZero();
  }
  d.QxN = Matrix::Zero(nx, nx);
  d.lxN = -p.x0;
  d.cN = 0.0;
  d.x0 = Vector::Zero(nx);
  return out;
}

ConstraintSet empty_constraint_set(const GeneralCftoc& p) {
  ConstraintSet s;
  for (int t = 0; t <= p.horizon(); ++t) s.emplace_back(static_cast<std::size_t>(p.nc(t)), false);
  return s;
}

std::size_t count(const ConstraintSet& s) {
  std::size_t n = 0;
  for (const auto& row : s) n += static_cast<std::size_t>(std::count(row.begin(), row.end(), true));
  return n;
}

WorkingSet map_working_set(const DualMap& map, const ConstraintSet& primal) {
  if (static_cast<int>(primal.size()) != map.horizon + 1) {
    throw Error(ErrorCode::DimensionMismatch, "primal working set horizon");
  }
  std::vector<std::vector<Bound>> status(primal.size());
  for (int t = 0; t <= map.horizon; ++t) {
    const Index nz = map.nz[t], nc = map.nc[t];
    if (static_cast<Index>(primal[t].size()) != nc) throw Error(ErrorCode::DimensionMismatch, "primal working set size", t);
    auto& st = status[static_cast<std::size_t>(map.dual_stage(t))];
    st.assign(static_cast<std::size_t>(nz + nc), Bound::Free);
    for (Index i = 0; i < nc; ++i)
      if (!primal[t][i]) st[static_cast<std::size_t>(map.gamma_position(t, i))] = Bound::Lower;
  }
  return WorkingSet::from_status(std::move(status));
}

ConstraintSet unmap_working_set(const DualMap& map, const WorkingSet& dual) {
  ConstraintSet out(static_cast<std::size_t>(map.horizon + 1));
  for (int t = 0; t <= map.horizon; ++t) {
    const auto& st = dual.status[static_cast<std::size_t>(map.dual_stage(t))];
    for (Index i = 0; i < map.nc[t]; ++i) out[t].push_back(st[static_cast<std::size_t>(map.gamma_position(t, i))] == Bound::Free);
  }
  return out;
}

PrimalPoint recover_primal(const GeneralCftoc& p, const DualMap& map, const std::vector<Vector>& xd,
                           const std::vector<Vector>& ud, const std::vector<Vector>& lambda_d) {
  const int n = p.horizon();
  if (static_cast<int>(lambda_d.size()) != n + 2 || static_cast<int>(ud.size()) != n + 1 ||
      static_cast<int>(xd.size()) != n + 2) {
    throw Error(ErrorCode::DimensionMismatch, "dual solution horizon");
  }
  PrimalPoint out;
  for (int t = 0; t <= n; ++t) out.x.push_back(-lambda_d[static_cast<std::size_t>(n + 1 - t)]);
  for (int t = 0; t < n; ++t) {
    const auto& s = p.stages[t];
    const Index nz = s.nz(), nu = s.nu(), nc = s.nc();
    const Matrix& qbar = map.Qbar[t];
    const auto qzu = qbar.topRightCorner(nz, nu);
    const auto qu = qbar.bottomRightCorner(nu, nu);
    const int tau = n - t;
    const Vector& alpha = xd[static_cast<std::size_t>(tau)];
    const Vector beta = ud[tau].head(nz);
    const Vector gamma = ud[tau].tail(nc);
    out.u.push_back(-qzu.transpose() * s.lz - qu * s.lu - qu * (s.B.transpose() * alpha) +
                    qzu.transpose() * beta - qu * (s.Hu.transpose() * gamma));
  }
  return out;
}

DualDirection dual_search_direction(const CftocProblem& dual, const WorkingSet& ws,
                                    const RiccatiOptions& opts) {
  DualDirection out;
  out.part = partition(dual, ws);
  out.f = factorize(out.part.uftoc, opts);
  out.b = backward(out.part.uftoc, out.f, opts);
  out.traj = forward(out.part.uftoc, out.f, out.b);
  out.u = assemble_inputs(dual, ws, out.traj.w);
  return out;
}

double primal_objective(const GeneralCftoc& p, const PrimalPoint& pt) {
  double j = 0.0;
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    Vector y(s.nz() + s.nu());
    y << s.M * pt.x[t], pt.u[t];
    j += 0.5 * y.dot(s.Q * y) + s.lz.dot(y.head(s.nz())) + s.lu.dot(pt.u[t]) + s.c;
  }
  const Vector z = p.MN * pt.x.back();
  return j + 0.5 * z.dot(p.QzN * z) + p.lzN.dot(z) + p.cN;
}

double primal_infeasibility(const GeneralCftoc& p, const PrimalPoint& pt) {
  double v = (pt.x[0] - p.x0).cwiseAbs().maxCoeff();
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    v = std::max(v, (s.A * pt.x[t] + s.B * pt.u[t] + s.a - pt.x[t + 1]).cwiseAbs().maxCoeff());
    if (s.nc() > 0) v = std::max(v, (s.Hx * pt.x[t] + s.Hu * pt.u[t] + s.h).maxCoeff());
  }
  if (p.hN.size() > 0) v = std::max(v, (p.HxN * pt.x.back() + p.hN).maxCoeff());
  return std::max(v, 0.0);
}

GeneralSolution solve_via_dual(const GeneralCftoc& p, const AsOptions& opts) {
  const auto built = build_dual(p);
  GeneralSolution out;
  const auto init = map_working_set(built.map, empty_constraint_set(p));
  out.dual = solve(built.dual, init, opts);
  out.primal = recover_primal(p, built.map, out.dual.x, out.dual.u, out.dual.lambda);
  out.active = unmap_working_set(built.map, out.dual.working_set);
  return out;
}

}  // namespace modric
