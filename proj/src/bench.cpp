#include "modric/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace modric {

namespace {

using Rng = std::mt19937_64;

Matrix randn(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

Vector randn_vec(Rng& rng, Index n) { return randn(rng, n, 1); }

Matrix gram(Rng& rng, Index rows, Index dim, double shift) {
  const Matrix r = randn(rng, rows, dim);
  Matrix q = r.transpose() * r / static_cast<double>(std::max<Index>(dim, 1));
  q.diagonal().array() += shift;
  return symmetrized(q);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

template <class Fn>
std::int64_t median_time_ns(int repeats, Fn&& fn) {
  fn();  // warm-up
  std::vector<std::int64_t> times;
  for (int i = 0; i < std::max(repeats, 1); ++i) times.push_back(fn());
  std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
  return times[times.size() / 2];
}

std::int64_t elapsed_ns(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
}

double solve_residual(const UftocProblem& p, const RiccatiFactorization& f) {
  return kkt_residual(p, forward(p, f, backward(p, f)));
}

}  // namespace

UftocProblem gen_uftoc(std::uint64_t seed, int horizon, Index nx, Index nw, const GenOptions& opts) {
  Rng rng(seed);
  const bool strict = opts.convexity == Convexity::Strict;
  const double scale = 1.0 / std::sqrt(static_cast<double>(nx));
  const Index dim = nx + nw;
  UftocProblem p;
  for (int t = 0; t < horizon; ++t) {
    UftocStage s;
    s.A = randn(rng, nx, nx) * scale;
    s.Bw = randn(rng, nx, nw) * scale;
    s.a = randn_vec(rng, nx);
    const Matrix q = strict ? gram(rng, dim, dim, opts.mu) : gram(rng, std::max<Index>(nw - 1, 0), dim, 0.0);
    s.Qx = q.topLeftCorner(nx, nx);
    s.Qxw = q.topRightCorner(nx, nw);
    s.Qw = q.bottomRightCorner(nw, nw);
    if (strict) {
      s.lx = randn_vec(rng, nx);
      s.lw = randn_vec(rng, nw);
    } else {
      const Vector l = q * randn_vec(rng, dim);
      s.lx = l.head(nx);
      s.lw = l.tail(nw);
    }
    s.c = randn(rng, 1, 1)(0, 0);
    p.stages.push_back(std::move(s));
  }
  p.QxN = gram(rng, nx, nx, strict ? opts.mu : 0.0);
  p.lxN = randn_vec(rng, nx);
  p.cN = randn(rng, 1, 1)(0, 0);
  p.x0 = randn_vec(rng, nx);
  return p;
}

CftocProblem gen_cftoc(std::uint64_t seed, int horizon, Index nx, Index nu, const GenOptions& opts) {
  const UftocProblem u = gen_uftoc(seed, horizon, nx, nu, opts);
  CftocProblem p;
  for (const auto& s : u.stages) p.stages.push_back({s.A, s.Bw, s.a, s.Qx, s.Qxw, s.Qw, s.lx, s.lw, s.c, {}, {}});
  p.QxN = u.QxN;
  p.lxN = u.lxN;
  p.cN = u.cN;
  p.x0 = u.x0;

  // Place the bounds relative to the unconstrained optimum.
  const auto f = factorize(u);
  const auto tr = forward(u, f, backward(u, f));
  Rng rng(mix_seed(seed, 0x6f, 0x17));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < horizon; ++t) {
    auto& s = p.stages[t];
    s.umin.resize(nu);
    s.umax.resize(nu);
    for (Index i = 0; i < nu; ++i) {
      const double opt = tr.w[t](i);
      const double width = 0.5 + unif(rng);
      if (unif(rng) < opts.active_fraction) {
        const double cut = 0.1 + 0.5 * unif(rng);
        if (unif(rng) < 0.5) {
          s.umin(i) = opt + cut;
          s.umax(i) = s.umin(i) + width;
        } else {
          s.umax(i) = opt - cut;
          s.umin(i) = s.umax(i) - width;
        }
      } else {
        s.umin(i) = opt - width;
        s.umax(i) = opt + width;
      }
    }
  }
  return p;
}

int TmPolicy::stage(int horizon) const {
  switch (kind) {
    case Kind::First: return 0;
    case Kind::Last: return horizon - 1;
    case Kind::Fraction: break;
  }
  const int t = static_cast<int>(std::lround(fraction * (horizon - 1)));
  return std::clamp(t, 0, horizon - 1);
}

std::string TmPolicy::to_string() const {
  switch (kind) {
    case Kind::First: return "first";
    case Kind::Last: return "last";
    case Kind::Fraction: break;
  }
  std::ostringstream os;
  os << "frac:" << fraction;
  return os.str();
}

TmPolicy TmPolicy::parse(const std::string& text) {
  TmPolicy p;
  if (text == "first") {
    p.kind = Kind::First;
  } else if (text == "last") {
    p.kind = Kind::Last;
  } else if (text.rfind("frac:", 0) == 0) {
    p.kind = Kind::Fraction;
    std::size_t used = 0;
    try {
      p.fraction = std::stod(text.substr(5), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size() - 5 || !(p.fraction >= 0.0 && p.fraction <= 1.0)) {
      throw Error(ErrorCode::InvalidProblem, "tm fraction must be in [0, 1]: " + text);
    }
  } else {
    throw Error(ErrorCode::InvalidProblem, "tm policy must be first, last or frac:<f>: " + text);
  }
  return p;
}

std::vector<Index> log_spaced_sizes(Index lo, Index hi, int count) {
  std::set<Index> out;
  if (count <= 1) return {lo};
  for (int i = 0; i < count; ++i) {
    const double e = std::log(static_cast<double>(lo)) +
                     (std::log(static_cast<double>(hi)) - std::log(static_cast<double>(lo))) * i / (count - 1);
    out.insert(static_cast<Index>(std::lround(std::exp(e))));
  }
  return {out.begin(), out.end()};
}

RemovalInstance removal_instance(std::uint64_t seed, int horizon, Index n, int tm, Convexity convexity) {
  GenOptions g;
  g.convexity = convexity;
  RemovalInstance r;
  r.after = gen_uftoc(seed, horizon, n, n, g);
  r.before = r.after;
  auto& s = r.before.stages[tm];
  const Index kept = s.nw() - 1;
  s.Bw = Matrix(s.Bw.leftCols(kept));
  s.Qxw = Matrix(s.Qxw.leftCols(kept));
  s.Qw = Matrix(s.Qw.topLeftCorner(kept, kept));
  s.lw = Vector(s.lw.head(kept));
  r.delta.kind = DeltaKind::Remove;
  r.delta.changes.push_back({tm, {kept}});
  return r;
}

BenchRecord measure(const UftocProblem& before, const UftocProblem& after, const WorkingSetDelta& delta,
                    int inner_repeats, bool use_modification, double fallback_ratio) {
  BenchRecord rec;
  rec.size = after.nx();
  rec.horizon = after.horizon();
  rec.tm = delta.t_max();

  RiccatiFactorization fresh;
  rec.t_recompute_ns = median_time_ns(inner_repeats, [&] {
    const auto start = std::chrono::steady_clock::now();
    fresh = factorize(after);
    return elapsed_ns(start);
  });
  rec.resid_recompute = solve_residual(after, fresh);

  if (!use_modification) {
    rec.t_modify_ns = median_time_ns(inner_repeats, [&] {
      const auto start = std::chrono::steady_clock::now();
      RiccatiFactorization again = factorize(after);
      return elapsed_ns(start);
    });
    rec.resid_modify = rec.resid_recompute;
    return rec;
  }

  const RiccatiFactorization base = factorize(before);
  const BackwardPass base_b = backward(before, base);
  ModifyOptions mopts;
  mopts.fallback_ratio = fallback_ratio;
  RiccatiFactorization modified;
  ModifyReport rep;
  rec.t_modify_ns = median_time_ns(inner_repeats, [&] {
    modified = base;
    const auto start = std::chrono::steady_clock::now();
    rep = modify_factorization(before, after, modified, delta, mopts);
    return elapsed_ns(start);
  });
  BackwardPass b = base_b;
  const auto refreshed = refresh_solution(after, modified, b, rep.t_max);
  rec.resid_modify = kkt_residual(after, refreshed.traj);
  for (Index r : rep.ranks) rec.rank = std::max(rec.rank, r);
  rec.fallback = rep.fallback;
  for (std::size_t t = 0; t < fresh.P.size(); ++t) {
    rec.max_p_diff = std::max(rec.max_p_diff, (modified.P[t] - fresh.P[t]).norm() / (1.0 + fresh.P[t].norm()));
  }
  return rec;
}

std::vector<BenchRecord> run_benchmark(const BenchScenario& s) {
  if (s.reps < 1) throw Error(ErrorCode::InvalidProblem, "reps must be at least 1");
  if (s.horizon < 1) throw Error(ErrorCode::InvalidProblem, "horizon must be at least 1");
  if (!std::is_sorted(s.sizes.begin(), s.sizes.end())) throw Error(ErrorCode::InvalidProblem, "sizes must be ascending");
  std::vector<BenchRecord> out;
  const int tm = s.tm.stage(s.horizon);
  for (Index n : s.sizes) {
    if (n < 1) throw Error(ErrorCode::InvalidProblem, "sizes must be positive");
    for (int rep = 0; rep < s.reps; ++rep) {
      const auto inst = removal_instance(mix_seed(s.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)),
                                         s.horizon, n, tm, s.convexity);
      BenchRecord r;
      try {
        r = measure(inst.before, inst.after, inst.delta, s.inner_repeats, s.use_modification, s.fallback_ratio);
      } catch (const Error& e) {
        r.size = n;
        r.horizon = s.horizon;
        r.tm = tm;
        r.resid_recompute = r.resid_modify = std::numeric_limits<double>::quiet_NaN();
        r.error = e.what();
      }
      r.rep = rep;
      out.push_back(r);
      if (!r.error.empty()) return out;
    }
  }
  return out;
}

const char* const kCsvHeader = "size,N,tm,rep,t_recompute_ns,t_modify_ns,resid_recompute,resid_modify,rank,fallback";

void write_csv(const std::vector<BenchRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  os << kCsvHeader << '\n';
  os.precision(6);
  for (const auto& r : records) {
    os << r.size << ',' << r.horizon << ',' << r.tm << ',' << r.rep << ',' << r.t_recompute_ns << ','
       << r.t_modify_ns << ',' << std::scientific << r.resid_recompute << ',' << r.resid_modify
       << std::defaultfloat << ',' << r.rank << ',' << (r.fallback ? 1 : 0) << '\n';
  }
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path);
}

std::vector<BenchRecord> read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path);
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw Error(ErrorCode::Io, "unexpected CSV header in " + path);
  std::vector<BenchRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 10) throw Error(ErrorCode::Io, "malformed CSV row: " + line);
    try {
      BenchRecord r;
      r.size = std::stol(f[0]);
      r.horizon = std::stoi(f[1]);
      r.tm = std::stoi(f[2]);
      r.rep = std::stoi(f[3]);
      r.t_recompute_ns = std::stoll(f[4]);
      r.t_modify_ns = std::stoll(f[5]);
      r.resid_recompute = std::stod(f[6]);
      r.resid_modify = std::stod(f[7]);
      r.rank = std::stol(f[8]);
      r.fallback = f[9] == "1";
      out.push_back(r);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Io, "malformed CSV row: " + line);
    }
  }
  return out;
}

void write_sidecar(const BenchScenario& s, const std::vector<BenchRecord>& records, const std::string& path) {
  nlohmann::json j;
  j["scenario"] = {{"seed", s.seed},
                   {"horizon", s.horizon},
                   {"sizes", s.sizes},
                   {"tm", s.tm.to_string()},
                   {"reps", s.reps},
                   {"inner_repeats", s.inner_repeats},
                   {"modify", s.use_modification},
                   {"tol", s.tol},
                   {"fallback_ratio", s.fallback_ratio},
                   {"convexity", s.convexity == Convexity::Strict ? "strict" : "semidefinite"}};
  const auto v = verify_residuals(records, s.tol);
  j["summary"] = {{"rows", v.rows},
                  {"max_residual", v.max_residual},
                  {"max_p_diff", v.max_p_diff},
                  {"passed", v.passed}};
  if (!records.empty() && !records.back().error.empty()) j["error"] = records.back().error;
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  os << j.dump(2) << '\n';
}

VerifyReport verify_residuals(const std::vector<BenchRecord>& records, double tol, bool throw_on_failure) {
  VerifyReport v;
  v.rows = records.size();
  if (records.empty()) {
    v.warning = "no rows to verify";
    return v;
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    double worst = std::max(r.resid_recompute, r.resid_modify);
    if (std::isnan(r.resid_recompute) || std::isnan(r.resid_modify)) worst = std::numeric_limits<double>::infinity();
    if (worst > v.max_residual) {
      v.max_residual = worst;
      v.worst_row = i;
    }
    v.max_p_diff = std::max(v.max_p_diff, r.max_p_diff);
  }
  v.passed = v.max_residual <= tol && v.max_p_diff <= tol;
  if (!v.passed && throw_on_failure) {
    const auto& r = records[v.worst_row];
    std::ostringstream os;
    os << "residual " << v.max_residual << " exceeds " << tol << " at row " << v.worst_row << " (size " << r.size
       << ", rep " << r.rep << ")";
    throw Error(ErrorCode::ThresholdExceeded, os.str());
  }
  return v;
}

}  // namespace modric
