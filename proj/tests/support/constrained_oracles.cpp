#include "constrained_oracles.hpp"

#include <cmath>
#include <limits>

namespace modric::testing {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

struct Offsets {
  std::vector<Index> x;
  std::vector<Index> u;
  Index total = 0;
};

template <class P>
Offsets offsets(const P& p) {
  Offsets o;
  const Index nx = p.nx();
  for (int t = 0; t <= p.horizon(); ++t) {
    o.x.push_back(o.total);
    o.total += nx;
  }
  for (int t = 0; t < p.horizon(); ++t) {
    o.u.push_back(o.total);
    o.total += p.stages[t].nu();
  }
  return o;
}

template <class P>
void add_dynamics(const P& p, const Offsets& o, DenseQp& qp) {
  const Index nx = p.nx();
  const int n = p.horizon();
  qp.E = Matrix::Zero(nx * (n + 1), o.total);
  qp.e = Vector::Zero(nx * (n + 1));
  qp.E.block(0, o.x[0], nx, nx).setIdentity();
  qp.e.head(nx) = p.x0;
  for (int t = 0; t < n; ++t) {
    const auto& s = p.stages[t];
    const Index r = nx * (t + 1);
    qp.E.block(r, o.x[t + 1], nx, nx) = -Matrix::Identity(nx, nx);
    qp.E.block(r, o.x[t], nx, nx) = s.A;
    qp.E.block(r, o.u[t], nx, s.nu()) = s.B;
    qp.e.segment(r, nx) = -s.a;
  }
}

template <class P>
DenseTrajectory split_impl(const P& p, const Vector& y) {
  const auto o = offsets(p);
  DenseTrajectory out;
  for (int t = 0; t <= p.horizon(); ++t) out.x.push_back(y.segment(o.x[t], p.nx()));
  for (int t = 0; t < p.horizon(); ++t) out.u.push_back(y.segment(o.u[t], p.stages[t].nu()));
  return out;
}

}  // namespace

DenseQp dense_qp(const CftocProblem& p) {
  const auto o = offsets(p);
  const Index nx = p.nx();
  DenseQp qp;
  qp.H = Matrix::Zero(o.total, o.total);
  qp.f = Vector::Zero(o.total);
  std::vector<std::pair<Index, double>> rows;   // (variable, sign * bound)
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    const Index nu = s.nu();
    qp.H.block(o.x[t], o.x[t], nx, nx) += s.Qx;
    qp.H.block(o.x[t], o.u[t], nx, nu) += s.Qxu;
    qp.H.block(o.u[t], o.x[t], nu, nx) += s.Qxu.transpose();
    qp.H.block(o.u[t], o.u[t], nu, nu) += s.Qu;
    qp.f.segment(o.x[t], nx) += s.lx;
    qp.f.segment(o.u[t], nu) += s.lu;
    qp.constant += s.c;
  }
  qp.constant += p.cN;
  qp.H.block(o.x.back(), o.x.back(), nx, nx) += p.QxN;
  qp.f.segment(o.x.back(), nx) += p.lxN;
  add_dynamics(p, o, qp);

  std::vector<Vector> crow;
  std::vector<double> d;
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    for (Index i = 0; i < s.nu(); ++i) {
      if (std::isfinite(s.umax(i))) {
        crow.push_back(Vector::Unit(o.total, o.u[t] + i));
        d.push_back(s.umax(i));
      }
      if (std::isfinite(s.umin(i))) {
        crow.push_back(-Vector::Unit(o.total, o.u[t] + i));
        d.push_back(-s.umin(i));
      }
    }
  }
  qp.C = Matrix::Zero(static_cast<Index>(crow.size()), o.total);
  qp.d = Vector::Zero(static_cast<Index>(d.size()));
  for (std::size_t k = 0; k < crow.size(); ++k) {
    qp.C.row(static_cast<Index>(k)) = crow[k].transpose();
    qp.d(static_cast<Index>(k)) = d[k];
  }
  return qp;
}

DenseQp dense_qp(const GeneralCftoc& p) {
  const auto o = offsets(p);
  const Index nx = p.nx();
  const int n = p.horizon();
  DenseQp qp;
  qp.H = Matrix::Zero(o.total, o.total);
  qp.f = Vector::Zero(o.total);
  Index nc = p.hN.size();
  for (const auto& s : p.stages) nc += s.nc();
  qp.C = Matrix::Zero(nc, o.total);
  qp.d = Vector::Zero(nc);
  Index row = 0;
  for (int t = 0; t < n; ++t) {
    const auto& s = p.stages[t];
    const Index nz = s.nz(), nu = s.nu();
    Matrix lift = Matrix::Zero(nz + nu, o.total);
    lift.block(0, o.x[t], nz, nx) = s.M;
    lift.block(nz, o.u[t], nu, nu).setIdentity();
    qp.H += lift.transpose() * s.Q * lift;
    Vector l(nz + nu);
    l << s.lz, s.lu;
    qp.f += lift.transpose() * l;
    qp.constant += s.c;
    qp.C.block(row, o.x[t], s.nc(), nx) = s.Hx;
    qp.C.block(row, o.u[t], s.nc(), nu) = s.Hu;
    qp.d.segment(row, s.nc()) = -s.h;
    row += s.nc();
  }
  qp.H.block(o.x[n], o.x[n], nx, nx) += p.MN.transpose() * p.QzN * p.MN;
  qp.f.segment(o.x[n], nx) += p.MN.transpose() * p.lzN;
  qp.constant += p.cN;
  qp.C.block(row, o.x[n], p.hN.size(), nx) = p.HxN;
  qp.d.segment(row, p.hN.size()) = -p.hN;
  add_dynamics(p, o, qp);
  return qp;
}

DenseTrajectory split(const CftocProblem& p, const Vector& y) { return split_impl(p, y); }
DenseTrajectory split(const GeneralCftoc& p, const Vector& y) { return split_impl(p, y); }

CftocProblem random_cftoc(Rng& rng, int horizon, Index nx, Index max_nu) {
  std::uniform_int_distribution<Index> nu_dist(1, max_nu);
  std::uniform_real_distribution<double> width(0.05, 1.0);
  std::uniform_int_distribution<int> kind(0, 5);
  std::vector<Index> nu;
  for (int t = 0; t < horizon; ++t) nu.push_back(nu_dist(rng));
  const auto base = random_uftoc(rng, horizon, nx, nu, false, 0.05);
  CftocProblem p;
  for (int t = 0; t < horizon; ++t) {
    const auto& b = base.stages[t];
    CftocStage s{b.A, b.Bw, b.a, b.Qx, b.Qxw, b.Qw, 3.0 * b.lx, 3.0 * b.lw, b.c, {}, {}};
    s.umin.resize(nu[t]);
    s.umax.resize(nu[t]);
    for (Index i = 0; i < nu[t]; ++i) {
      const int k = kind(rng);
      s.umin(i) = k == 0 ? -inf : -width(rng);
      s.umax(i) = k == 1 ? inf : width(rng);
    }
    p.stages.push_back(std::move(s));
  }
  p.QxN = base.QxN;
  p.lxN = base.lxN;
  p.cN = base.cN;
  p.x0 = 2.0 * base.x0;
  return p;
}

GeneralCftoc random_general(Rng& rng, int horizon, Index nx, Index max_nu) {
  std::uniform_int_distribution<Index> nu_dist(1, max_nu);
  std::uniform_real_distribution<double> margin(0.05, 0.5);
  GeneralCftoc p;
  p.x0 = randn_vec(rng, nx);
  Vector x = p.x0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(nx));
  auto constraints = [&](Index nc, const Vector& xr, const Vector& ur, Matrix& hx, Matrix& hu, Vector& h) {
    hx = randn(rng, nc, nx);
    hu = randn(rng, nc, ur.size());
    h.resize(nc);
    for (Index i = 0; i < nc; ++i) h(i) = -(hx.row(i).dot(xr) + hu.row(i).dot(ur)) - margin(rng);
  };
  for (int t = 0; t < horizon; ++t) {
    GeneralStage s;
    const Index nu = nu_dist(rng);
    const Index nz = std::uniform_int_distribution<Index>(1, nx)(rng);
    const Index nc = std::uniform_int_distribution<Index>(0, nu - 1)(rng);
    s.A = randn(rng, nx, nx) * scale;
    s.B = randn(rng, nx, nu) * scale;
    s.a = 0.3 * randn_vec(rng, nx);
    s.M = randn(rng, nz, nx);
    s.Q = random_psd(rng, nz + nu, nz + nu, 0.1);
    s.lz = 2.0 * randn_vec(rng, nz);
    s.lu = 2.0 * randn_vec(rng, nu);
    s.c = randn(rng, 1, 1)(0, 0);
    const Vector u = 0.3 * randn_vec(rng, nu);
    constraints(nc, x, u, s.Hx, s.Hu, s.h);
    x = s.A * x + s.B * u + s.a;
    p.stages.push_back(std::move(s));
  }
  const Index nz = std::uniform_int_distribution<Index>(1, nx)(rng);
  p.MN = randn(rng, nz, nx);
  p.QzN = random_psd(rng, nz, nz, 0.1);
  p.lzN = 2.0 * randn_vec(rng, nz);
  p.cN = randn(rng, 1, 1)(0, 0);
  const Index nc = std::uniform_int_distribution<Index>(0, 1)(rng);
  Matrix unused;
  constraints(nc, x, Vector::Zero(0), p.HxN, unused, p.hN);
  return p;
}

}  // namespace modric::testing
