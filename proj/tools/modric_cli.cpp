#include <algorithm>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "modric/asqp.hpp"
#include "modric/bench.hpp"
#include "modric/problem_io.hpp"

namespace {

using namespace modric;

constexpr int kOk = 0;
constexpr int kResidualFailure = 2;
constexpr int kSolverError = 3;

/// Accepts "10,20,40" or "lo:hi:count" (log-spaced).
std::vector<Index> parse_sizes(const std::string& text) {
  std::vector<Index> out;
  if (std::count(text.begin(), text.end(), ':') == 2) {
    const auto a = text.find(':'), b = text.rfind(':');
    return log_spaced_sizes(std::stol(text.substr(0, a)), std::stol(text.substr(a + 1, b - a - 1)),
                            std::stoi(text.substr(b + 1)));
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const long v = std::stol(item);
    if (v < 1) throw CLI::ValidationError("--sizes", "sizes must be positive");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--sizes", "no sizes given");
  return out;
}

Convexity parse_convexity(const std::string& text) {
  if (text == "strict") return Convexity::Strict;
  if (text == "semidefinite") return Convexity::Semidefinite;
  throw CLI::ValidationError("--convexity", "expected strict or semidefinite");
}

nlohmann::json trajectory_json(const std::vector<Vector>& x, const std::vector<Vector>& u,
                               const std::vector<Vector>& lambda) {
  nlohmann::json j;
  for (const char* key : {"x", "u", "lambda"}) j[key] = nlohmann::json::array();
  for (const auto& v : x) j["x"].push_back(vector_to_json(v));
  for (const auto& v : u) j["u"].push_back(vector_to_json(v));
  for (const auto& v : lambda) j["lambda"].push_back(vector_to_json(v));
  return j;
}

void emit(const nlohmann::json& j, const std::string& out) {
  if (out.empty() || out == "-") std::cout << j.dump(2) << '\n';
  else write_json_file(j, out);
}

struct GenArgs {
  std::string kind = "uftoc";
  std::uint64_t seed = 1;
  int horizon = 10;
  Index nx = 4;
  Index nu = 2;
  std::string convexity = "strict";
  std::string out;
};

int run_gen(const GenArgs& a) {
  GenOptions opts;
  opts.convexity = parse_convexity(a.convexity);
  if (a.kind == "uftoc") emit(to_json(gen_uftoc(a.seed, a.horizon, a.nx, a.nu, opts)), a.out);
  else emit(to_json(gen_cftoc(a.seed, a.horizon, a.nx, a.nu, opts)), a.out);
  return kOk;
}

struct SolveArgs {
  std::string in;
  std::string out;
  double tol = 1e-8;
  bool no_modify = false;
};

int run_solve(const SolveArgs& a) {
  const auto j = read_json_file(a.in);
  nlohmann::json result;
  double resid = 0.0;
  if (j.value("kind", "") == "uftoc") {
    const auto p = uftoc_from_json(j);
    const auto f = factorize(p);
    const auto b = backward(p, f);
    const auto traj = forward(p, f, b);
    resid = kkt_residual(p, traj);
    result = trajectory_json(traj.x, traj.w, traj.lambda);
    result["objective"] = objective(p, traj);
  } else {
    const auto p = cftoc_from_json(j);
    AsOptions opts;
    opts.tol = a.tol;
    opts.use_modification = !a.no_modify;
    const auto s = solve(p, opts);
    resid = kkt_residual(p, s.x, s.u, s.lambda, s.working_set, s.mu);
    result = trajectory_json(s.x, s.u, s.lambda);
    result["mu"] = nlohmann::json::array();
    for (const auto& v : s.mu) result["mu"].push_back(vector_to_json(v));
    result["objective"] = s.objective;
    result["iterations"] = s.iterations;
    result["active"] = s.working_set.active_count();
  }
  result["kkt_residual"] = resid;
  emit(result, a.out);
  if (resid > a.tol) {
    std::cerr << "KKT residual " << resid << " exceeds " << a.tol << '\n';
    return kResidualFailure;
  }
  return kOk;
}

struct BenchArgs {
  BenchScenario scenario;
  std::string sizes = "10,20,40";
  std::string tm = "last";
  std::string convexity = "strict";
  std::string out = "bench.csv";
  bool no_modify = false;
  std::string config;
};

/// Fills every option the command line left unset from a JSON object whose
/// keys are the flag names without dashes.
void apply_config(BenchArgs& a, const CLI::App& cmd) {
  const auto j = read_json_file(a.config);
  if (!j.is_object()) throw Error(ErrorCode::InvalidProblem, "bench config must be a JSON object");
  auto unset = [&](const char* key) { return j.contains(key) && cmd.count(std::string("--") + key) == 0; };
  try {
    if (unset("seed")) a.scenario.seed = j["seed"].get<std::uint64_t>();
    if (unset("horizon")) a.scenario.horizon = j["horizon"].get<int>();
    if (unset("reps")) a.scenario.reps = j["reps"].get<int>();
    if (unset("inner")) a.scenario.inner_repeats = j["inner"].get<int>();
    if (unset("tol")) a.scenario.tol = j["tol"].get<double>();
    if (unset("tm")) a.tm = j["tm"].get<std::string>();
    if (unset("convexity")) a.convexity = j["convexity"].get<std::string>();
    if (unset("out")) a.out = j["out"].get<std::string>();
    if (unset("no-modify")) a.no_modify = j["no-modify"].get<bool>();
    if (unset("sizes")) {
      if (j["sizes"].is_array()) {
        a.sizes.clear();
        for (const auto& v : j["sizes"]) a.sizes += (a.sizes.empty() ? "" : ",") + std::to_string(v.get<long>());
      } else {
        a.sizes = j["sizes"].get<std::string>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidProblem, std::string("bad bench config: ") + e.what());
  }
}

int run_bench(BenchArgs a, const CLI::App& cmd) {
  if (!a.config.empty()) apply_config(a, cmd);
  auto& s = a.scenario;
  s.sizes = parse_sizes(a.sizes);
  s.tm = TmPolicy::parse(a.tm);
  s.convexity = parse_convexity(a.convexity);
  s.use_modification = !a.no_modify;
  const auto records = run_benchmark(s);
  write_csv(records, a.out);
  write_sidecar(s, records, a.out + ".json");
  if (!records.empty() && !records.back().error.empty()) {
    const auto& r = records.back();
    std::cerr << "solver error at size " << r.size << ", rep " << r.rep << ": " << r.error << '\n';
    return kSolverError;
  }
  const auto v = verify_residuals(records, s.tol);
  std::cout << records.size() << " rows written to " << a.out << ", max residual " << v.max_residual << '\n';
  if (!v.passed) {
    std::cerr << "residual check failed at row " << v.worst_row << '\n';
    return kResidualFailure;
  }
  return kOk;
}

struct VerifyArgs {
  std::string in;
  double tol = 1e-8;
};

int run_verify(const VerifyArgs& a) {
  const auto v = verify_residuals(read_csv(a.in), a.tol);
  if (!v.warning.empty()) std::cerr << "warning: " << v.warning << '\n';
  std::cout << v.rows << " rows, max residual " << v.max_residual << '\n';
  if (!v.passed) {
    std::cerr << "residual " << v.max_residual << " exceeds " << a.tol << " at row " << v.worst_row << '\n';
    return kResidualFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Riccati factorization with low-rank modifications"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a random problem as JSON");
  g->add_option("--kind", gen.kind, "uftoc or cftoc")->check(CLI::IsMember({"uftoc", "cftoc"}));
  g->add_option("--seed", gen.seed);
  g->add_option("--horizon", gen.horizon)->check(CLI::PositiveNumber);
  g->add_option("--nx", gen.nx)->check(CLI::PositiveNumber);
  g->add_option("--nu", gen.nu)->check(CLI::NonNegativeNumber);
  g->add_option("--convexity", gen.convexity, "strict or semidefinite");
  g->add_option("--out", gen.out, "output file, stdout when omitted");

  SolveArgs sol;
  auto* s = app.add_subcommand("solve", "Solve a problem read from JSON");
  s->add_option("--in", sol.in)->required();
  s->add_option("--out", sol.out, "output file, stdout when omitted");
  s->add_option("--tol", sol.tol);
  s->add_flag("--no-modify", sol.no_modify, "recompute the factorization at every iteration");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time modification against re-factorization");
  b->add_option("--seed", bench.scenario.seed);
  b->add_option("--horizon", bench.scenario.horizon)->check(CLI::PositiveNumber);
  b->add_option("--sizes", bench.sizes, "comma list or lo:hi:count");
  b->add_option("--tm", bench.tm, "first, last or frac:<f>");
  b->add_option("--reps", bench.scenario.reps)->check(CLI::PositiveNumber);
  b->add_option("--inner", bench.scenario.inner_repeats, "timed repeats per instance")->check(CLI::PositiveNumber);
  b->add_option("--convexity", bench.convexity, "strict or semidefinite");
  b->add_option("--out", bench.out);
  b->add_option("--tol", bench.scenario.tol);
  b->add_flag("--no-modify", bench.no_modify, "time re-factorization only");
  b->add_option("--config", bench.config, "JSON scenario; command-line flags take precedence");

  VerifyArgs ver;
  auto* v = app.add_subcommand("verify", "Check the residual columns of a benchmark CSV");
  v->add_option("--in", ver.in)->required();
  v->add_option("--tol", ver.tol);

  CLI11_PARSE(app, argc, argv);
  try {
    if (g->parsed()) return run_gen(gen);
    if (s->parsed()) return run_solve(sol);
    if (b->parsed()) return run_bench(bench, *b);
    return run_verify(ver);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    if (e.code() == ErrorCode::ThresholdExceeded) return kResidualFailure;
    return kSolverError;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kSolverError;
  }
}
