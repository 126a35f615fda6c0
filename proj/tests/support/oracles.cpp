#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace modric::testing {

Matrix randn(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

Vector randn_vec(Rng& rng, Index n) { return randn(rng, n, 1); }

Matrix random_psd(Rng& rng, Index n, Index rank, double shift) {
  const Matrix r = randn(rng, rank, n);
  Matrix q = r.transpose() * r / static_cast<double>(std::max<Index>(n, 1));
  q.diagonal().array() += shift;
  return 0.5 * (q + q.transpose());
}

UftocProblem random_uftoc(Rng& rng, int horizon, Index nx, const std::vector<Index>& nw,
                          bool singular, double shift) {
  UftocProblem p;
  const double scale = 1.0 / std::sqrt(static_cast<double>(nx));
  for (int t = 0; t < horizon; ++t) {
    const Index m = nw[static_cast<std::size_t>(t)];
    UftocStage s;
    s.A = randn(rng, nx, nx) * scale;
    s.Bw = randn(rng, nx, m) * scale;
    s.a = randn_vec(rng, nx);
    const Index dim = nx + m;
    const Index low = std::max<Index>(m - 1, 0);
    const Index rank = std::uniform_int_distribution<Index>(low, std::max(low, dim - 1))(rng);
    Matrix q = singular ? random_psd(rng, dim, rank, 0.0) : random_psd(rng, dim, dim, shift);
    s.lx = randn_vec(rng, nx);
    s.lw = randn_vec(rng, m);
    // An inert last input (no cost, no effect on the state) makes G exactly singular.
    if (singular && m > 0 && std::bernoulli_distribution(0.5)(rng)) {
      q.row(dim - 1).setZero();
      q.col(dim - 1).setZero();
      s.Bw.col(m - 1).setZero();
      s.lw(m - 1) = 0.0;
    }
    s.Qx = q.topLeftCorner(nx, nx);
    s.Qxw = q.topRightCorner(nx, m);
    s.Qw = q.bottomRightCorner(m, m);
    s.c = randn(rng, 1, 1)(0, 0);
    p.stages.push_back(std::move(s));
  }
  p.QxN = singular ? random_psd(rng, nx, std::max<Index>(nx / 2, 1), 0.0) : random_psd(rng, nx, nx, shift);
  p.lxN = randn_vec(rng, nx);
  p.cN = randn(rng, 1, 1)(0, 0);
  p.x0 = randn_vec(rng, nx);
  return p;
}

Matrix pinv(const Matrix& m, double rel_threshold) {
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(m);
  cod.setThreshold(rel_threshold);
  return cod.pseudoInverse();
}

namespace {

struct Layout {
  std::vector<Index> x_off;
  std::vector<Index> w_off;
  Index n_vars = 0;
};

Layout layout(const UftocProblem& p) {
  Layout l;
  const Index nx = p.nx();
  for (int t = 0; t <= p.horizon(); ++t) {
    l.x_off.push_back(l.n_vars);
    l.n_vars += nx;
  }
  for (int t = 0; t < p.horizon(); ++t) {
    l.w_off.push_back(l.n_vars);
    l.n_vars += p.stages[t].nw();
  }
  return l;
}

}  // namespace

DenseSolution dense_uftoc_solve(const UftocProblem& p) {
  const Index nx = p.nx();
  const int n_stages = p.horizon();
  const Layout l = layout(p);
  const Index n_eq = nx * (n_stages + 1);
  const Index dim = l.n_vars + n_eq;
  Matrix kkt = Matrix::Zero(dim, dim);
  Vector rhs = Vector::Zero(dim);

  for (int t = 0; t < n_stages; ++t) {
    const auto& s = p.stages[t];
    const Index m = s.nw();
    const Index xo = l.x_off[t], wo = l.w_off[t];
    kkt.block(xo, xo, nx, nx) += s.Qx;
    kkt.block(xo, wo, nx, m) += s.Qxw;
    kkt.block(wo, xo, m, nx) += s.Qxw.transpose();
    kkt.block(wo, wo, m, m) += s.Qw;
    rhs.segment(xo, nx) -= s.lx;
    rhs.segment(wo, m) -= s.lw;
  }
  const Index xn = l.x_off[n_stages];
  kkt.block(xn, xn, nx, nx) += p.QxN;
  rhs.segment(xn, nx) -= p.lxN;

  // constraint rows: lambda_0 for -x_0 + xbar, lambda_{t+1} for -x_{t+1} + A x_t + B w_t + a
  const Index row0 = l.n_vars;
  kkt.block(row0, l.x_off[0], nx, nx) = -Matrix::Identity(nx, nx);
  rhs.segment(row0, nx) = -p.x0;
  for (int t = 0; t < n_stages; ++t) {
    const auto& s = p.stages[t];
    const Index r = row0 + nx * (t + 1);
    kkt.block(r, l.x_off[t], nx, nx) = s.A;
    kkt.block(r, l.x_off[t + 1], nx, nx) = -Matrix::Identity(nx, nx);
    kkt.block(r, l.w_off[t], nx, s.nw()) = s.Bw;
    rhs.segment(r, nx) = -s.a;
  }
  for (Index i = l.n_vars; i < dim; ++i)
    for (Index j = 0; j < l.n_vars; ++j) kkt(j, i) = kkt(i, j);

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
  const Vector sol = cod.solve(rhs);

  DenseSolution out;
  for (int t = 0; t <= n_stages; ++t) {
    out.x.push_back(sol.segment(l.x_off[t], nx));
    out.lambda.push_back(sol.segment(row0 + nx * t, nx));
  }
  for (int t = 0; t < n_stages; ++t) out.w.push_back(sol.segment(l.w_off[t], p.stages[t].nw()));

  Trajectory tr{out.x, out.w, out.lambda};
  out.objective = objective(p, tr);
  return out;
}

Matrix dense_cost_to_go(const UftocProblem& p, int t0) {
  const Index nx = p.nx();
  const int n_stages = p.horizon();
  if (t0 == n_stages) return p.QxN;
  Index n_w = 0;
  std::vector<Index> w_off;
  for (int t = t0; t < n_stages; ++t) {
    w_off.push_back(nx + n_w);
    n_w += p.stages[t].nw();
  }
  const Index dim = nx + n_w;
  Matrix hess = Matrix::Zero(dim, dim);
  Matrix xmap = Matrix::Zero(nx, dim);
  xmap.leftCols(nx).setIdentity();
  for (int t = t0; t < n_stages; ++t) {
    const auto& s = p.stages[t];
    const Index m = s.nw();
    Matrix wmap = Matrix::Zero(m, dim);
    wmap.block(0, w_off[t - t0], m, m).setIdentity();
    Matrix stacked(nx + m, dim);
    stacked << xmap, wmap;
    Matrix q(nx + m, nx + m);
    q << s.Qx, s.Qxw, s.Qxw.transpose(), s.Qw;
    hess += stacked.transpose() * q * stacked;
    xmap = s.A * xmap + s.Bw * wmap;
  }
  hess += xmap.transpose() * p.QxN * xmap;
  const Matrix hxx = hess.topLeftCorner(nx, nx);
  const Matrix hxw = hess.topRightCorner(nx, n_w);
  const Matrix hww = hess.bottomRightCorner(n_w, n_w);
  const Matrix out = hxx - hxw * pinv(hww, 1e-13) * hxw.transpose();
  return 0.5 * (out + out.transpose());
}

DenseQpResult dense_qp_solve(const DenseQp& qp, double tol) {
  const Index n = qp.H.rows();
  DenseQpResult res;

  // Eliminate equalities: y = y0 + Z s.
  Vector y0 = Vector::Zero(n);
  Matrix z = Matrix::Identity(n, n);
  if (qp.E.rows() > 0) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(qp.E);
    y0 = cod.solve(qp.e);
    Eigen::FullPivLU<Matrix> lu(qp.E);
    z = lu.kernel();
    if (lu.rank() == n) z = Matrix::Zero(n, 0);
    else {
      Eigen::HouseholderQR<Matrix> qr(z);
      z = qr.householderQ() * Matrix::Identity(n, z.cols());
    }
  }
  const Matrix hr = z.transpose() * qp.H * z;
  const Vector fr = z.transpose() * (qp.H * y0 + qp.f);
  const Matrix cr = qp.C * z;
  const Vector dr = qp.d - qp.C * y0;
  const Index m = cr.rows();
  Eigen::LLT<Matrix> hr_llt(hr);

  auto primal_of = [&](const Vector& gamma) -> Vector {
    if (z.cols() == 0) return Vector::Zero(0);
    return hr_llt.solve(-(fr + cr.transpose() * gamma));
  };

  // Dual coordinate descent on min 1/2 g^T Q g + q^T g, g >= 0.
  const Matrix hinv_ct = z.cols() > 0 ? Matrix(hr_llt.solve(cr.transpose())) : Matrix::Zero(0, m);
  const Matrix qd = cr * hinv_ct;
  const Vector ql = (z.cols() > 0 ? Vector(cr * hr_llt.solve(fr)) : Vector::Zero(m)) + dr;
  Vector gamma = Vector::Zero(m);
  Vector grad = ql;

  auto polish = [&](const std::vector<Index>& active, Vector& s_out, Vector& g_out) {
    const Index na = static_cast<Index>(active.size());
    const Index ns = z.cols();
    Matrix kkt = Matrix::Zero(ns + na, ns + na);
    Vector rhs(ns + na);
    kkt.topLeftCorner(ns, ns) = hr;
    rhs.head(ns) = -fr;
    for (Index i = 0; i < na; ++i) {
      kkt.block(ns + i, 0, 1, ns) = cr.row(active[i]);
      kkt.block(0, ns + i, ns, 1) = cr.row(active[i]).transpose();
      rhs(ns + i) = dr(active[i]);
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
    const Vector sol = cod.solve(rhs);
    s_out = sol.head(ns);
    g_out = Vector::Zero(m);
    for (Index i = 0; i < na; ++i) g_out(active[i]) = sol(ns + i);
  };

  auto kkt_ok = [&](const Vector& s, const Vector& g) {
    const double scale = 1.0 + fr.norm() + dr.norm();
    if (g.size() > 0 && g.minCoeff() < -tol * scale) return false;
    const Vector slack = dr - cr * s;
    if (m > 0 && slack.minCoeff() < -tol * scale) return false;
    for (Index i = 0; i < m; ++i) {
      if (std::abs(g(i) * slack(i)) > tol * scale * scale) return false;
    }
    return (hr * s + fr + cr.transpose() * g).norm() <= tol * scale;
  };

  for (int round = 0; round < 200 && !res.converged; ++round) {
    for (int sweep = 0; sweep < 500; ++sweep) {
      double change = 0.0;
      for (Index i = 0; i < m; ++i) {
        if (qd(i, i) <= 1e-300) continue;
        const double next = std::max(0.0, gamma(i) - grad(i) / qd(i, i));
        const double delta = next - gamma(i);
        if (delta != 0.0) {
          grad += qd.col(i) * delta;
          gamma(i) = next;
          change = std::max(change, std::abs(delta));
        }
      }
      if (change < 1e-15) break;
    }
    const Vector s_cd = primal_of(gamma);
    // Two guesses for the active set: positive multipliers and tight rows.
    for (int guess = 0; guess < 2 && !res.converged; ++guess) {
      std::vector<Index> active;
      for (Index i = 0; i < m; ++i) {
        const bool on = guess == 0 ? gamma(i) > 1e-10 : (dr(i) - cr.row(i).dot(s_cd)) < 1e-8;
        if (on) active.push_back(i);
      }
      Vector s, g;
      polish(active, s, g);
      if (kkt_ok(s, g)) {
        res.converged = true;
        res.y = y0 + z * s;
        res.gamma = g;
      }
    }
  }
  if (!res.converged) {
    res.y = y0 + z * primal_of(gamma);
    res.gamma = gamma;
  }
  res.objective = 0.5 * res.y.dot(qp.H * res.y) + qp.f.dot(res.y) + qp.constant;
  if (qp.E.rows() > 0) {
    const Vector r = -(qp.H * res.y + qp.f + qp.C.transpose() * res.gamma);
    res.nu = pinv(qp.E.transpose()) * r;
  }
  return res;
}

}  // namespace modric::testing
