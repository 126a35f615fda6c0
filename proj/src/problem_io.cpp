#include "modric/problem_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace modric {

namespace {

using nlohmann::json;

constexpr double inf = std::numeric_limits<double>::infinity();

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidProblem, what); }

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) bad(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* what) {
  if (!j.is_number()) bad(std::string(what) + " must be a number");
  return j.get<double>();
}

Index count(const json& j, const char* what) {
  if (!j.is_number_integer() || j.get<long long>() < 0) bad(std::string(what) + " must be a nonnegative integer");
  return static_cast<Index>(j.get<long long>());
}

json stage_common(const Matrix& a, const Matrix& b, const Vector& av, const Matrix& qx, const Matrix& qxu,
                  const Matrix& qu, const Vector& lx, const Vector& lu, double c, const char* bname,
                  const char* qxuname, const char* quname, const char* luname) {
  json s;
  s["A"] = matrix_to_json(a);
  s[bname] = matrix_to_json(b);
  s["a"] = vector_to_json(av);
  s["Qx"] = matrix_to_json(qx);
  s[qxuname] = matrix_to_json(qxu);
  s[quname] = matrix_to_json(qu);
  s["lx"] = vector_to_json(lx);
  s[luname] = vector_to_json(lu);
  s["c"] = c;
  return s;
}

template <class P>
json header(const char* kind, const P& p) {
  json j;
  j["kind"] = kind;
  j["horizon"] = p.horizon();
  j["nx"] = p.nx();
  j["x0"] = vector_to_json(p.x0);
  j["QxN"] = matrix_to_json(p.QxN);
  j["lxN"] = vector_to_json(p.lxN);
  j["cN"] = p.cN;
  return j;
}

template <class P>
void read_header(const json& j, const char* kind, P& p, Index& nx, int& horizon) {
  if (field(j, "kind") != kind) bad(std::string("expected kind '") + kind + "'");
  nx = count(field(j, "nx"), "nx");
  horizon = static_cast<int>(count(field(j, "horizon"), "horizon"));
  p.x0 = vector_from_json(field(j, "x0"), nx, "x0");
  p.QxN = matrix_from_json(field(j, "QxN"), nx, nx, "QxN");
  p.lxN = vector_from_json(field(j, "lxN"), nx, "lxN");
  p.cN = number(field(j, "cN"), "cN");
  const json& st = field(j, "stages");
  if (!st.is_array() || static_cast<int>(st.size()) != horizon) bad("stages must be an array of length horizon");
}

}  // namespace

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v(i))) out.push_back(v(i));
    else out.push_back(nullptr);
  }
  return out;
}

Matrix matrix_from_json(const json& j, Index rows, Index cols, const char* what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) {
    bad(std::string(what) + ": expected " + std::to_string(rows) + " rows");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      bad(std::string(what) + ": expected " + std::to_string(cols) + " columns in row " + std::to_string(i));
    }
    for (Index k = 0; k < cols; ++k) m(i, k) = number(row[static_cast<std::size_t>(k)], what);
  }
  return m;
}

Vector vector_from_json(const json& j, Index size, const char* what, std::optional<double> null_value) {
  if (!j.is_array() || static_cast<Index>(j.size()) != size) {
    bad(std::string(what) + ": expected " + std::to_string(size) + " entries");
  }
  Vector v(size);
  for (Index i = 0; i < size; ++i) {
    const json& e = j[static_cast<std::size_t>(i)];
    if (e.is_null() && null_value) v(i) = *null_value;
    else v(i) = number(e, what);
  }
  return v;
}

json to_json(const UftocProblem& p) {
  json j = header("uftoc", p);
  j["stages"] = json::array();
  for (const auto& s : p.stages) {
    json js = stage_common(s.A, s.Bw, s.a, s.Qx, s.Qxw, s.Qw, s.lx, s.lw, s.c, "Bw", "Qxw", "Qw", "lw");
    js["nw"] = s.nw();
    j["stages"].push_back(std::move(js));
  }
  return j;
}

json to_json(const CftocProblem& p) {
  json j = header("cftoc", p);
  j["stages"] = json::array();
  for (const auto& s : p.stages) {
    json js = stage_common(s.A, s.B, s.a, s.Qx, s.Qxu, s.Qu, s.lx, s.lu, s.c, "B", "Qxu", "Qu", "lu");
    js["nu"] = s.nu();
    js["umin"] = vector_to_json(s.umin);
    js["umax"] = vector_to_json(s.umax);
    j["stages"].push_back(std::move(js));
  }
  return j;
}

UftocProblem uftoc_from_json(const json& j) {
  UftocProblem p;
  Index nx = 0;
  int horizon = 0;
  read_header(j, "uftoc", p, nx, horizon);
  for (const json& js : j.at("stages")) {
    UftocStage s;
    const Index nw = count(field(js, "nw"), "nw");
    s.A = matrix_from_json(field(js, "A"), nx, nx, "A");
    s.Bw = matrix_from_json(field(js, "Bw"), nx, nw, "Bw");
    s.a = vector_from_json(field(js, "a"), nx, "a");
    s.Qx = matrix_from_json(field(js, "Qx"), nx, nx, "Qx");
    s.Qxw = matrix_from_json(field(js, "Qxw"), nx, nw, "Qxw");
    s.Qw = matrix_from_json(field(js, "Qw"), nw, nw, "Qw");
    s.lx = vector_from_json(field(js, "lx"), nx, "lx");
    s.lw = vector_from_json(field(js, "lw"), nw, "lw");
    s.c = number(field(js, "c"), "c");
    p.stages.push_back(std::move(s));
  }
  p.validate();
  return p;
}

CftocProblem cftoc_from_json(const json& j) {
  CftocProblem p;
  Index nx = 0;
  int horizon = 0;
  read_header(j, "cftoc", p, nx, horizon);
  for (const json& js : j.at("stages")) {
    CftocStage s;
    const Index nu = count(field(js, "nu"), "nu");
    s.A = matrix_from_json(field(js, "A"), nx, nx, "A");
    s.B = matrix_from_json(field(js, "B"), nx, nu, "B");
    s.a = vector_from_json(field(js, "a"), nx, "a");
    s.Qx = matrix_from_json(field(js, "Qx"), nx, nx, "Qx");
    s.Qxu = matrix_from_json(field(js, "Qxu"), nx, nu, "Qxu");
    s.Qu = matrix_from_json(field(js, "Qu"), nu, nu, "Qu");
    s.lx = vector_from_json(field(js, "lx"), nx, "lx");
    s.lu = vector_from_json(field(js, "lu"), nu, "lu");
    s.c = number(field(js, "c"), "c");
    s.umin = vector_from_json(field(js, "umin"), nu, "umin", -inf);
    s.umax = vector_from_json(field(js, "umax"), nu, "umax", inf);
    p.stages.push_back(std::move(s));
  }
  p.validate();
  return p;
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, "invalid JSON in " + path + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  os << j.dump(2) << '\n';
  if (!os) throw Error(ErrorCode::Io, "write failed for " + path);
}

}  // namespace modric
