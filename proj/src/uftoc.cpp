#include "modric/uftoc.hpp"

#include <algorithm>
#include <string>

namespace modric {

namespace {

void require_dims(bool ok, const std::string& what, int stage) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what, stage);
}

void require_psd(const Matrix& m, double tol, const std::string& what, int stage) {
  if (m.rows() == 0) return;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m), Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  if (ev.minCoeff() < -tol * (1.0 + ev.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::NotPsd, what, stage);
  }
}

}  // namespace

void UftocProblem::validate(bool check_psd, double psd_tol) const {
  const Index n = nx();
  require_dims(QxN.rows() == n && QxN.cols() == n, "terminal cost size", horizon());
  require_dims(lxN.size() == n, "terminal linear term size", horizon());
  require_finite(QxN, "QxN");
  require_finite(lxN, "lxN");
  require_finite(x0, "x0");
  for (int t = 0; t < horizon(); ++t) {
    const auto& s = stages[t];
    const Index m = s.nw();
    require_dims(s.A.rows() == n && s.A.cols() == n, "A", t);
    require_dims(s.Bw.rows() == n, "Bw", t);
    require_dims(s.a.size() == n, "a", t);
    require_dims(s.Qx.rows() == n && s.Qx.cols() == n, "Qx", t);
    require_dims(s.Qxw.rows() == n && s.Qxw.cols() == m, "Qxw", t);
    require_dims(s.Qw.rows() == m && s.Qw.cols() == m, "Qw", t);
    require_dims(s.lx.size() == n && s.lw.size() == m, "linear terms", t);
    for (const Matrix* mat : {&s.A, &s.Bw, &s.Qx, &s.Qxw, &s.Qw}) require_finite(*mat, "stage matrix");
    require_finite(s.a, "a");
    require_finite(s.lx, "lx");
    require_finite(s.lw, "lw");
    if (check_psd) {
      Matrix q(n + m, n + m);
      q << s.Qx, s.Qxw, s.Qxw.transpose(), s.Qw;
      require_psd(q, psd_tol, "stage cost is not PSD", t);
    }
  }
  if (check_psd) require_psd(QxN, psd_tol, "terminal cost is not PSD", horizon());
}

std::vector<int> RiccatiFactorization::singular_stages() const {
  std::vector<int> out;
  for (int t = 0; t < horizon(); ++t) {
    if (stages[t].singular()) out.push_back(t);
  }
  return out;
}

RiccatiStage factorize_stage(const UftocStage& s, const Matrix& p_next, Matrix& p_out,
                             const RiccatiOptions& opts, double p_next_scale) {
  RiccatiStage out;
  const Matrix pa = p_next * s.A;
  const Matrix pb = p_next * s.Bw;
  out.F = symmetrized(s.Qx + s.A.transpose() * pa);
  out.G = symmetrized(s.Qw + s.Bw.transpose() * pb);
  out.H = s.Qxw + s.A.transpose() * pb;
  const double p_scale = std::max(p_next_scale, p_next.norm());
  const double b_norm = s.Bw.norm();
  out.g_factor = factor_psd(out.G, opts.factor, s.Qw.norm() + b_norm * b_norm * p_scale);
  out.K = -out.g_factor.pseudo_solve(out.H.transpose());
  // P = F + H K written in closed-loop form.
  const Matrix a_cl = s.A + s.Bw * out.K;
  const Matrix qk = s.Qxw * out.K;
  p_out = symmetrized(s.Qx + qk + qk.transpose() + out.K.transpose() * s.Qw * out.K +
                      a_cl.transpose() * (p_next * a_cl));
  return out;
}

RiccatiFactorization factorize(const UftocProblem& p, const RiccatiOptions& opts) {
  const int n_stages = p.horizon();
  RiccatiFactorization f;
  f.P.resize(n_stages + 1);
  f.stages.resize(n_stages);
  f.P[n_stages] = symmetrized(p.QxN);
  refactorize_below(p, f, n_stages - 1, opts);
  return f;
}

void refactorize_below(const UftocProblem& p, RiccatiFactorization& f, int last_stage,
                       const RiccatiOptions& opts) {
  double scale = f.P[p.horizon()].norm();
  for (int t = p.horizon() - 1; t > last_stage; --t) scale = std::max(scale, f.stages[t].F.norm());
  for (int t = last_stage; t >= 0; --t) {
    try {
      f.stages[t] = factorize_stage(p.stages[t], f.P[t + 1], f.P[t], opts, scale);
      scale = std::max(scale, f.stages[t].F.norm());
    } catch (const Error& e) {
      throw Error(e.code(), e.message(), t);
    }
  }
}

BackwardPass backward(const UftocProblem& p, const RiccatiFactorization& f,
                      const RiccatiOptions& opts) {
  const int n_stages = p.horizon();
  BackwardPass b;
  b.psi.resize(n_stages + 1);
  b.k.resize(n_stages);
  b.cbar.resize(n_stages + 1);
  b.psi[n_stages] = -p.lxN;
  b.cbar[n_stages] = p.cN;
  backward_below(p, f, b, n_stages - 1, opts);
  return b;
}

void backward_below(const UftocProblem& p, const RiccatiFactorization& f, BackwardPass& b,
                    int last_stage, const RiccatiOptions& opts) {
  for (int t = last_stage; t >= 0; --t) {
    const auto& s = p.stages[t];
    const auto& st = f.stages[t];
    const Matrix& p_next = f.P[t + 1];
    const Vector& psi_next = b.psi[t + 1];
    const Vector pa = p_next * s.a;
    const Vector shifted = psi_next - pa;

    const Vector rhs = s.Bw.transpose() * shifted - s.lw;
    Vector k = st.g_factor.pseudo_solve(rhs);
    if (st.singular()) {
      const double resid = (st.G * k - rhs).norm();
      if (resid > opts.range_tol * (1.0 + rhs.norm())) {
        throw Error(ErrorCode::InfeasibleOrUnbounded,
                    "right-hand side not in range of G (residual " + std::to_string(resid) + ")", t);
      }
    }
    b.psi[t] = s.A.transpose() * shifted - st.H * k - s.lx;
    b.cbar[t] = b.cbar[t + 1] + s.c + 0.5 * s.a.dot(pa) - psi_next.dot(s.a) - 0.5 * k.dot(st.G * k);
    b.k[t] = std::move(k);
  }
}

Trajectory forward(const UftocProblem& p, const RiccatiFactorization& f, const BackwardPass& b) {
  const int n_stages = p.horizon();
  Trajectory tr;
  tr.x.resize(n_stages + 1);
  tr.w.resize(n_stages);
  tr.lambda.resize(n_stages + 1);
  tr.x[0] = p.x0;
  for (int t = 0; t < n_stages; ++t) {
    const auto& s = p.stages[t];
    tr.w[t] = b.k[t] + f.stages[t].K * tr.x[t];
    tr.x[t + 1] = s.A * tr.x[t] + s.Bw * tr.w[t] + s.a;
    tr.lambda[t] = f.P[t] * tr.x[t] - b.psi[t];
  }
  tr.lambda[n_stages] = f.P[n_stages] * tr.x[n_stages] - b.psi[n_stages];
  return tr;
}

std::vector<Vector> dual_forward(const std::vector<FixedInputStage>& fixed, const Trajectory& traj) {
  std::vector<Vector> mu(fixed.size());
  for (std::size_t t = 0; t < fixed.size(); ++t) {
    const auto& fs = fixed[t];
    const Index nu = static_cast<Index>(fs.free_idx.size() + fs.fixed_idx.size());
    mu[t] = Vector::Zero(nu);
    if (fs.fixed_idx.empty()) continue;
    const Vector g = fs.lv + fs.Qxv.transpose() * traj.x[t] + fs.Qwv.transpose() * traj.w[t] +
                     fs.Qv * fs.v + fs.Bv.transpose() * traj.lambda[t + 1];
    for (std::size_t j = 0; j < fs.fixed_idx.size(); ++j) mu[t](fs.fixed_idx[j]) = g(static_cast<Index>(j));
  }
  return mu;
}

double kkt_residual(const UftocProblem& p, const Trajectory& tr) {
  const int n_stages = p.horizon();
  double sq = (tr.x[0] - p.x0).squaredNorm();
  for (int t = 0; t < n_stages; ++t) {
    const auto& s = p.stages[t];
    const Vector& x = tr.x[t];
    const Vector& w = tr.w[t];
    const Vector& lam_next = tr.lambda[t + 1];
    sq += (s.Qx * x + s.Qxw * w + s.lx + s.A.transpose() * lam_next - tr.lambda[t]).squaredNorm();
    sq += (s.Qxw.transpose() * x + s.Qw * w + s.lw + s.Bw.transpose() * lam_next).squaredNorm();
    sq += (s.A * x + s.Bw * w + s.a - tr.x[t + 1]).squaredNorm();
  }
  sq += (p.QxN * tr.x[n_stages] + p.lxN - tr.lambda[n_stages]).squaredNorm();
  return std::sqrt(sq);
}

double objective(const UftocProblem& p, const Trajectory& tr) {
  double j = 0.0;
  for (int t = 0; t < p.horizon(); ++t) {
    const auto& s = p.stages[t];
    const Vector& x = tr.x[t];
    const Vector& w = tr.w[t];
    j += 0.5 * x.dot(s.Qx * x) + x.dot(s.Qxw * w) + 0.5 * w.dot(s.Qw * w) + s.lx.dot(x) +
         s.lw.dot(w) + s.c;
  }
  const Vector& xn = tr.x[p.horizon()];
  return j + 0.5 * xn.dot(p.QxN * xn) + p.lxN.dot(xn) + p.cN;
}

double value_function(const RiccatiFactorization& f, const BackwardPass& b, const Vector& x0) {
  return 0.5 * x0.dot(f.P[0] * x0) - b.psi[0].dot(x0) + b.cbar[0];
}

}  // namespace modric
