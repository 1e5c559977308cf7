#include "ecohmpc/solver.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <queue>
#include <stdexcept>

#include "ecohmpc/log.hpp"

namespace ecohmpc {

// ---------------------------------------------------------------- Problem

int Problem::add_var(std::string name, double l, double u, double s) {
  names.push_back(std::move(name));
  lb.push_back(l);
  ub.push_back(u);
  scale.push_back(s > 0.0 ? s : 1.0);
  c.push_back(0.0);
  return num_vars() - 1;
}

void Problem::add_quad_cost(int i, int j, double v) {
  if (i > j) std::swap(i, j);
  Q.push_back({i, j, v});
}

int Problem::index_of(const std::string& name) const {
  for (int k = 0; k < num_vars(); ++k)
    if (names[static_cast<std::size_t>(k)] == name) return k;
  throw std::out_of_range("no variable named " + name);
}

namespace {

double get(const std::vector<double>& x, int j) { return x[static_cast<std::size_t>(j)]; }

double sym_quad(const std::vector<SymEntry>& P, const std::vector<double>& x) {
  double s = 0.0;
  for (const auto& e : P) s += (e.i == e.j ? 0.5 : 1.0) * e.v * get(x, e.i) * get(x, e.j);
  return s;
}

}  // namespace

double Problem::objective(const std::vector<double>& x) const {
  double f = c0 + sym_quad(Q, x);
  for (int j = 0; j < num_vars(); ++j) f += c[static_cast<std::size_t>(j)] * get(x, j);
  return f;
}

double Problem::row_value(const LinearRow& row, const std::vector<double>& x) const {
  double s = 0.0;
  for (const auto& [j, a] : row.a) s += a * get(x, j);
  return s;
}

double Problem::qrow_value(const QuadRow& row, const std::vector<double>& x) const {
  double s = row.r + sym_quad(row.P, x);
  for (const auto& [j, a] : row.q) s += a * get(x, j);
  return s;
}

Violation Problem::max_violation(const std::vector<double>& x) const {
  Violation worst;
  auto consider = [&](double viol, double mag, const std::string& where) {
    if (!(viol > 0.0) && !std::isnan(viol)) return;
    const double norm = std::isnan(viol) ? kInf : viol / std::max(1e-300, mag);
    worst.absolute = std::max(worst.absolute, std::isnan(viol) ? kInf : viol);
    if (norm > worst.normalized) {
      worst.normalized = norm;
      worst.where = where;
    }
  };
  for (int j = 0; j < num_vars(); ++j) {
    const double s = scale[static_cast<std::size_t>(j)];
    consider(lb[static_cast<std::size_t>(j)] - get(x, j), s, "lb " + names[static_cast<std::size_t>(j)]);
    consider(get(x, j) - ub[static_cast<std::size_t>(j)], s, "ub " + names[static_cast<std::size_t>(j)]);
  }
  for (const auto& row : rows) {
    double mag = 0.0;
    for (const auto& [j, a] : row.a) mag = std::max(mag, std::abs(a) * scale[static_cast<std::size_t>(j)]);
    const double v = row_value(row, x);
    consider(row.lo - v, mag, row.name);
    consider(v - row.hi, mag, row.name);
  }
  for (const auto& row : qrows) {
    double mag = 0.0;
    for (const auto& e : row.P)
      mag = std::max(mag, std::abs(e.v) * scale[static_cast<std::size_t>(e.i)] * scale[static_cast<std::size_t>(e.j)]);
    for (const auto& [j, a] : row.q) mag = std::max(mag, std::abs(a) * scale[static_cast<std::size_t>(j)]);
    consider(qrow_value(row, x), mag, row.name);
  }
  for (int j : binaries) {
    const double v = get(x, j);
    consider(std::min(std::abs(v), std::abs(v - 1.0)), 1.0, "integrality " + names[static_cast<std::size_t>(j)]);
  }
  return worst;
}

namespace {

void check_psd(const std::vector<SymEntry>& P, int n, const std::string& what) {
  std::vector<int> idx;
  for (const auto& e : P) {
    if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) throw std::invalid_argument(what + ": index out of range");
    idx.push_back(e.i);
    idx.push_back(e.j);
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  if (idx.empty()) return;
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(k, k);
  auto pos = [&](int v) { return static_cast<Eigen::Index>(std::lower_bound(idx.begin(), idx.end(), v) - idx.begin()); };
  for (const auto& e : P) {
    const auto a = pos(e.i), b = pos(e.j);
    M(a, b) += e.v;
    if (a != b) M(b, a) += e.v;
  }
  const double mag = std::max(1e-300, M.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-9 * mag) throw std::invalid_argument(what + ": quadratic part is not PSD");
}

}  // namespace

void Problem::validate() const {
  const int n = num_vars();
  if (lb.size() != names.size() || ub.size() != names.size() || scale.size() != names.size() ||
      c.size() != names.size()) {
    throw std::invalid_argument("problem arrays have inconsistent sizes");
  }
  for (int j = 0; j < n; ++j) {
    if (std::isnan(lb[static_cast<std::size_t>(j)]) || std::isnan(ub[static_cast<std::size_t>(j)]) ||
        lb[static_cast<std::size_t>(j)] > ub[static_cast<std::size_t>(j)]) {
      throw std::invalid_argument("crossed bounds on " + names[static_cast<std::size_t>(j)]);
    }
  }
  for (const auto& row : rows) {
    for (const auto& [j, a] : row.a)
      if (j < 0 || j >= n || !std::isfinite(a)) throw std::invalid_argument("bad entry in row " + row.name);
    if (row.lo > row.hi) throw std::invalid_argument("crossed row bounds in " + row.name);
  }
  check_psd(Q, n, "objective");
  for (const auto& row : qrows) {
    check_psd(row.P, n, "quadratic row " + row.name);
    for (const auto& [j, a] : row.q)
      if (j < 0 || j >= n) throw std::invalid_argument("bad entry in quadratic row " + row.name);
  }
  for (int j : binaries) {
    if (j < 0 || j >= n) throw std::invalid_argument("binary index out of range");
    if (lb[static_cast<std::size_t>(j)] < 0.0 || ub[static_cast<std::size_t>(j)] > 1.0) {
      throw std::invalid_argument("binary " + names[static_cast<std::size_t>(j)] + " must have bounds within [0, 1]");
    }
  }
  if (binaries.size() > 64) throw std::invalid_argument("at most 64 binaries supported");
}

namespace {

using nlohmann::json;

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_or(const json& j, double inf_value) { return j.is_null() ? inf_value : j.get<double>(); }

json sparse_json(const SparseVec& a) {
  json out = json::array();
  for (const auto& [j, v] : a) out.push_back({j, v});
  return out;
}
SparseVec sparse_from(const json& j) {
  SparseVec out;
  for (const auto& e : j) out.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
  return out;
}
json sym_json(const std::vector<SymEntry>& P) {
  json out = json::array();
  for (const auto& e : P) out.push_back({e.i, e.j, e.v});
  return out;
}
std::vector<SymEntry> sym_from(const json& j) {
  std::vector<SymEntry> out;
  for (const auto& e : j) out.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()});
  return out;
}

}  // namespace

std::string Problem::to_json() const {
  json j;
  j["names"] = names;
  json l = json::array(), u = json::array();
  for (std::size_t k = 0; k < names.size(); ++k) {
    l.push_back(num(lb[k]));
    u.push_back(num(ub[k]));
  }
  j["lb"] = l;
  j["ub"] = u;
  j["scale"] = scale;
  j["c"] = c;
  j["c0"] = c0;
  j["Q"] = sym_json(Q);
  json rs = json::array();
  for (const auto& r : rows) rs.push_back({{"name", r.name}, {"a", sparse_json(r.a)}, {"lo", num(r.lo)}, {"hi", num(r.hi)}});
  j["rows"] = rs;
  json qs = json::array();
  for (const auto& r : qrows) qs.push_back({{"name", r.name}, {"P", sym_json(r.P)}, {"q", sparse_json(r.q)}, {"r", r.r}});
  j["qrows"] = qs;
  j["binaries"] = binaries;
  return j.dump(1);
}

Problem Problem::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Problem p;
    p.names = j.at("names").get<std::vector<std::string>>();
    for (const auto& v : j.at("lb")) p.lb.push_back(num_or(v, -kInf));
    for (const auto& v : j.at("ub")) p.ub.push_back(num_or(v, kInf));
    p.scale = j.at("scale").get<std::vector<double>>();
    p.c = j.at("c").get<std::vector<double>>();
    p.c0 = j.value("c0", 0.0);
    p.Q = sym_from(j.at("Q"));
    for (const auto& r : j.at("rows"))
      p.rows.push_back({r.value("name", ""), sparse_from(r.at("a")), num_or(r.at("lo"), -kInf), num_or(r.at("hi"), kInf)});
    for (const auto& r : j.at("qrows"))
      p.qrows.push_back({r.value("name", ""), sym_from(r.at("P")), sparse_from(r.at("q")), r.at("r").get<double>()});
    p.binaries = j.at("binaries").get<std::vector<int>>();
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("problem JSON: ") + e.what());
  }
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::node_limit: return "node_limit";
    case SolveStatus::time_limit: return "time_limit";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "?";
}

// ---------------------------------------------------------------- presolve + scaling

namespace {

// Scaled, presolved convex problem: min 1/2 x'Qx + c'x, A x = b, G x <= h,
// 1/2 x'P_k x + q_k'x + r_k <= 0. Bounds appear as rows of G.
struct Std {
  int n = 0;
  std::vector<SymEntry> Q;
  std::vector<double> c;
  std::vector<SparseVec> A;
  std::vector<double> b;
  std::vector<SparseVec> G;
  std::vector<double> h;
  std::vector<QuadRow> QR;
  std::vector<double> lb, ub;  // scaled bounds, used for the start point
};

struct Reduced {
  Std s;
  std::vector<int> orig;        // original index of each reduced variable
  std::vector<double> x_fixed;  // full-length values of fixed variables
  std::vector<bool> fixed;
  std::vector<double> d;        // column scale of each reduced variable
  bool infeasible = false;
  std::string why;
};

SparseVec merge(SparseVec a) {
  std::sort(a.begin(), a.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
  SparseVec out;
  for (const auto& e : a) {
    if (!out.empty() && out.back().first == e.first)
      out.back().second += e.second;
    else
      out.push_back(e);
  }
  out.erase(std::remove_if(out.begin(), out.end(), [](const auto& e) { return e.second == 0.0; }), out.end());
  return out;
}

double feas_tol(double v) { return 1e-9 * (1.0 + std::abs(v)); }

Reduced presolve(const Problem& p, std::vector<double> lo, std::vector<double> hi) {
  Reduced R;
  const int n = p.num_vars();
  auto is_fixed = [&](int j) { return lo[static_cast<std::size_t>(j)] == hi[static_cast<std::size_t>(j)]; };
  std::vector<bool> consumed(p.rows.size(), false);
  for (int pass = 0; pass < 20; ++pass) {
    bool changed = false;
    for (std::size_t r = 0; r < p.rows.size(); ++r) {
      if (consumed[r]) continue;
      const auto& row = p.rows[r];
      double cst = 0.0;
      int free_j = -1;
      double free_a = 0.0;
      int n_free = 0;
      for (const auto& [j, a] : row.a) {
        if (a == 0.0) continue;
        if (is_fixed(j)) {
          cst += a * lo[static_cast<std::size_t>(j)];
        } else if (j != free_j) {
          if (free_j < 0) {
            free_j = j;
            free_a = a;
            ++n_free;
          } else {
            n_free = 2;
            break;
          }
        } else {
          free_a += a;
        }
      }
      if (n_free >= 2) continue;
      const double rl = row.lo - cst, rh = row.hi - cst;
      if (n_free == 0 || free_a == 0.0) {
        if (rl > feas_tol(row.lo) || rh < -feas_tol(row.hi)) {
          R.infeasible = true;
          R.why = "row " + row.name + " violated by fixed variables";
          return R;
        }
        consumed[r] = true;
        continue;
      }
      double bl = free_a > 0 ? rl / free_a : rh / free_a;
      double bh = free_a > 0 ? rh / free_a : rl / free_a;
      auto& L = lo[static_cast<std::size_t>(free_j)];
      auto& H = hi[static_cast<std::size_t>(free_j)];
      if (bl > L) L = bl;
      if (bh < H) H = bh;
      consumed[r] = true;
      changed = true;
      if (L > H) {
        if (L - H > feas_tol(std::max(std::abs(L), std::abs(H))) * 10.0) {
          R.infeasible = true;
          R.why = "bounds of " + p.names[static_cast<std::size_t>(free_j)] + " crossed by row " + row.name;
          return R;
        }
        L = H = 0.5 * (L + H);
      }
      if (H - L <= 1e-13 * std::max(1.0, std::abs(L))) L = H = 0.5 * (L + H);
    }
    if (!changed) break;
  }

  R.fixed.assign(static_cast<std::size_t>(n), false);
  R.x_fixed.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<int> red(static_cast<std::size_t>(n), -1);
  for (int j = 0; j < n; ++j) {
    if (is_fixed(j)) {
      R.fixed[static_cast<std::size_t>(j)] = true;
      R.x_fixed[static_cast<std::size_t>(j)] = lo[static_cast<std::size_t>(j)];
    } else {
      red[static_cast<std::size_t>(j)] = static_cast<int>(R.orig.size());
      R.orig.push_back(j);
      R.d.push_back(p.scale[static_cast<std::size_t>(j)]);
    }
  }
  Std& s = R.s;
  s.n = static_cast<int>(R.orig.size());
  s.c.assign(static_cast<std::size_t>(s.n), 0.0);
  auto rj = [&](int j) { return red[static_cast<std::size_t>(j)]; };
  auto dj = [&](int k) { return R.d[static_cast<std::size_t>(k)]; };
  auto xf = [&](int j) { return R.x_fixed[static_cast<std::size_t>(j)]; };

  // Objective.
  std::map<std::pair<int, int>, double> qmap;
  for (const auto& e : p.Q) {
    const int a = rj(e.i), b = rj(e.j);
    if (a >= 0 && b >= 0) {
      qmap[{std::min(a, b), std::max(a, b)}] += e.v * dj(a) * dj(b);
    } else if (a >= 0) {
      s.c[static_cast<std::size_t>(a)] += e.v * xf(e.j) * dj(a);
    } else if (b >= 0) {
      s.c[static_cast<std::size_t>(b)] += e.v * xf(e.i) * dj(b);
    }
  }
  for (int j = 0; j < n; ++j)
    if (rj(j) >= 0) s.c[static_cast<std::size_t>(rj(j))] += p.c[static_cast<std::size_t>(j)] * dj(rj(j));
  double omag = 0.0;
  for (const auto& [k, v] : qmap) omag = std::max(omag, std::abs(v));
  for (double v : s.c) omag = std::max(omag, std::abs(v));
  const double osc = omag > 0.0 ? 1.0 / omag : 1.0;
  for (const auto& [k, v] : qmap)
    if (v != 0.0) s.Q.push_back({k.first, k.second, v * osc});
  for (double& v : s.c) v *= osc;

  // Linear rows.
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    if (consumed[r]) continue;
    const auto& row = p.rows[r];
    SparseVec a;
    double cst = 0.0;
    for (const auto& [j, v] : row.a) {
      if (rj(j) >= 0)
        a.emplace_back(rj(j), v * dj(rj(j)));
      else
        cst += v * xf(j);
    }
    a = merge(std::move(a));
    double mag = 0.0;
    for (const auto& e : a) mag = std::max(mag, std::abs(e.second));
    if (mag == 0.0) continue;
    for (auto& e : a) e.second /= mag;
    const double l = (row.lo - cst) / mag, u = (row.hi - cst) / mag;
    if (row.lo == row.hi) {
      s.A.push_back(a);
      s.b.push_back(l);
      continue;
    }
    if (std::isfinite(u)) {
      s.G.push_back(a);
      s.h.push_back(u);
    }
    if (std::isfinite(l)) {
      SparseVec m = a;
      for (auto& e : m) e.second = -e.second;
      s.G.push_back(m);
      s.h.push_back(-l);
    }
  }
  // Bounds.
  s.lb.resize(static_cast<std::size_t>(s.n));
  s.ub.resize(static_cast<std::size_t>(s.n));
  for (int k = 0; k < s.n; ++k) {
    const int j = R.orig[static_cast<std::size_t>(k)];
    const double l = lo[static_cast<std::size_t>(j)] / dj(k), u = hi[static_cast<std::size_t>(j)] / dj(k);
    s.lb[static_cast<std::size_t>(k)] = l;
    s.ub[static_cast<std::size_t>(k)] = u;
    if (std::isfinite(u)) {
      s.G.push_back({{k, 1.0}});
      s.h.push_back(u);
    }
    if (std::isfinite(l)) {
      s.G.push_back({{k, -1.0}});
      s.h.push_back(-l);
    }
  }
  // Quadratic rows.
  for (const auto& row : p.qrows) {
    QuadRow q;
    q.name = row.name;
    q.r = row.r;
    std::map<std::pair<int, int>, double> pm;
    SparseVec lin;
    for (const auto& e : row.P) {
      const int a = rj(e.i), b = rj(e.j);
      if (a >= 0 && b >= 0) {
        pm[{std::min(a, b), std::max(a, b)}] += e.v * dj(a) * dj(b);
      } else if (a >= 0) {
        lin.emplace_back(a, e.v * xf(e.j) * dj(a));
      } else if (b >= 0) {
        lin.emplace_back(b, e.v * xf(e.i) * dj(b));
      } else {
        q.r += (e.i == e.j ? 0.5 : 1.0) * e.v * xf(e.i) * xf(e.j);
      }
    }
    for (const auto& [j, v] : row.q) {
      if (rj(j) >= 0)
        lin.emplace_back(rj(j), v * dj(rj(j)));
      else
        q.r += v * xf(j);
    }
    q.q = merge(std::move(lin));
    double mag = 0.0;
    for (const auto& [k, v] : pm) mag = std::max(mag, std::abs(v));
    for (const auto& e : q.q) mag = std::max(mag, std::abs(e.second));
    if (mag == 0.0) {
      if (q.r > feas_tol(0.0)) {
        R.infeasible = true;
        R.why = "quadratic row " + row.name + " violated by fixed variables";
        return R;
      }
      continue;
    }
    for (const auto& [k, v] : pm)
      if (v != 0.0) q.P.push_back({k.first, k.second, v / mag});
    if (q.P.empty()) {
      // Became linear after substitution.
      for (auto& e : q.q) e.second /= mag;
      s.G.push_back(q.q);
      s.h.push_back(-q.r / mag);
      continue;
    }
    for (auto& e : q.q) e.second /= mag;
    q.r /= mag;
    s.QR.push_back(std::move(q));
  }
  return R;
}

// ---------------------------------------------------------------- interior point

enum class IpmExit { converged, stalled, max_iter };
constexpr double kNearTol = 1e-7;

struct IpmResult {
  IpmExit exit = IpmExit::max_iter;
  Eigen::VectorXd x;
  double obj = 0.0;
  double pres = 0.0;
  int iterations = 0;
};

class Ipm {
 public:
  explicit Ipm(const Std& s) : s_(s), n_(s.n), me_(static_cast<int>(s.A.size())),
                               ml_(static_cast<int>(s.G.size())), mq_(static_cast<int>(s.QR.size())) {
    for (const auto& q : s_.QR) {
      std::vector<int> sup;
      for (const auto& e : q.P) {
        sup.push_back(e.i);
        sup.push_back(e.j);
      }
      for (const auto& e : q.q) sup.push_back(e.first);
      std::sort(sup.begin(), sup.end());
      sup.erase(std::unique(sup.begin(), sup.end()), sup.end());
      support_.push_back(std::move(sup));
    }
    for (double v : s_.h) h_inf_ = std::max(h_inf_, std::abs(v));
    for (double v : s_.b) b_inf_ = std::max(b_inf_, std::abs(v));
  }

  IpmResult run(const QcqpOptions& opt);

 private:
  Eigen::VectorXd reset_slacks(Eigen::VectorXd s, const Eigen::VectorXd& g) const;
  int m() const { return ml_ + mq_; }
  void eval_g(const Eigen::VectorXd& x, Eigen::VectorXd& g) const;
  void eval_quad_grads(const Eigen::VectorXd& x);
  Eigen::VectorXd J_times(const Eigen::VectorXd& dx) const;
  Eigen::VectorXd Jt_times(const Eigen::VectorXd& v) const;
  Eigen::VectorXd Q_times(const Eigen::VectorXd& x) const;
  Eigen::VectorXd A_times(const Eigen::VectorXd& x) const;
  Eigen::VectorXd At_times(const Eigen::VectorXd& y) const;
  bool assemble_and_factor(const Eigen::VectorXd& z, const Eigen::VectorXd& D, double prox);
  void solve_kkt(const Eigen::VectorXd& rx, const Eigen::VectorXd& ry, Eigen::VectorXd& dx, Eigen::VectorXd& dy);

  const Std& s_;
  int n_, me_, ml_, mq_;
  std::vector<std::vector<int>> support_;
  std::vector<SparseVec> qgrad_;  // gradient of each quadratic row over its support
  Eigen::SparseMatrix<double> K_, Ks_;  // KKT matrix and its equilibrated copy
  Eigen::VectorXd S_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
  double h_inf_ = 0.0, b_inf_ = 0.0;
  std::vector<Eigen::Triplet<double>> trip_;
  static constexpr double kRegP = 1e-10;
  static constexpr double kRegD = 1e-10;
};

void Ipm::eval_g(const Eigen::VectorXd& x, Eigen::VectorXd& g) const {
  g.resize(m());
  for (int r = 0; r < ml_; ++r) {
    double v = -s_.h[static_cast<std::size_t>(r)];
    for (const auto& [j, a] : s_.G[static_cast<std::size_t>(r)]) v += a * x(j);
    g(r) = v;
  }
  for (int k = 0; k < mq_; ++k) {
    const auto& q = s_.QR[static_cast<std::size_t>(k)];
    double v = q.r;
    for (const auto& e : q.P) v += (e.i == e.j ? 0.5 : 1.0) * e.v * x(e.i) * x(e.j);
    for (const auto& [j, a] : q.q) v += a * x(j);
    g(ml_ + k) = v;
  }
}

void Ipm::eval_quad_grads(const Eigen::VectorXd& x) {
  qgrad_.assign(static_cast<std::size_t>(mq_), {});
  for (int k = 0; k < mq_; ++k) {
    const auto& q = s_.QR[static_cast<std::size_t>(k)];
    const auto& sup = support_[static_cast<std::size_t>(k)];
    SparseVec g;
    for (int j : sup) g.emplace_back(j, 0.0);
    auto at = [&](int j) -> double& {
      return std::lower_bound(g.begin(), g.end(), j, [](const auto& e, int v) { return e.first < v; })->second;
    };
    for (const auto& e : q.P) {
      at(e.i) += e.v * x(e.j);
      if (e.i != e.j) at(e.j) += e.v * x(e.i);
    }
    for (const auto& [j, a] : q.q) at(j) += a;
    qgrad_[static_cast<std::size_t>(k)] = std::move(g);
  }
}

Eigen::VectorXd Ipm::J_times(const Eigen::VectorXd& dx) const {
  Eigen::VectorXd out(m());
  for (int r = 0; r < ml_; ++r) {
    double v = 0.0;
    for (const auto& [j, a] : s_.G[static_cast<std::size_t>(r)]) v += a * dx(j);
    out(r) = v;
  }
  for (int k = 0; k < mq_; ++k) {
    double v = 0.0;
    for (const auto& [j, a] : qgrad_[static_cast<std::size_t>(k)]) v += a * dx(j);
    out(ml_ + k) = v;
  }
  return out;
}

Eigen::VectorXd Ipm::Jt_times(const Eigen::VectorXd& w) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
  for (int r = 0; r < ml_; ++r)
    for (const auto& [j, a] : s_.G[static_cast<std::size_t>(r)]) out(j) += a * w(r);
  for (int k = 0; k < mq_; ++k)
    for (const auto& [j, a] : qgrad_[static_cast<std::size_t>(k)]) out(j) += a * w(ml_ + k);
  return out;
}

Eigen::VectorXd Ipm::Q_times(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
  for (const auto& e : s_.Q) {
    out(e.i) += e.v * x(e.j);
    if (e.i != e.j) out(e.j) += e.v * x(e.i);
  }
  return out;
}

Eigen::VectorXd Ipm::A_times(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(me_);
  for (int r = 0; r < me_; ++r) {
    double v = 0.0;
    for (const auto& [j, a] : s_.A[static_cast<std::size_t>(r)]) v += a * x(j);
    out(r) = v;
  }
  return out;
}

Eigen::VectorXd Ipm::At_times(const Eigen::VectorXd& y) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
  for (int r = 0; r < me_; ++r)
    for (const auto& [j, a] : s_.A[static_cast<std::size_t>(r)]) out(j) += a * y(r);
  return out;
}

bool Ipm::assemble_and_factor(const Eigen::VectorXd& z, const Eigen::VectorXd& D, double prox) {
  trip_.clear();
  auto add = [&](int i, int j, double v) {
    if (i < j) std::swap(i, j);
    trip_.emplace_back(i, j, v);
  };
  for (int j = 0; j < n_; ++j) add(j, j, kRegP + prox);
  for (const auto& e : s_.Q) add(e.i, e.j, e.v);
  for (int k = 0; k < mq_; ++k)
    for (const auto& e : s_.QR[static_cast<std::size_t>(k)].P) add(e.i, e.j, z(ml_ + k) * e.v);
  auto outer = [&](const SparseVec& a, double w) {
    for (std::size_t p = 0; p < a.size(); ++p)
      for (std::size_t q = 0; q <= p; ++q) add(a[p].first, a[q].first, w * a[p].second * a[q].second);
  };
  for (int r = 0; r < ml_; ++r) outer(s_.G[static_cast<std::size_t>(r)], D(r));
  for (int k = 0; k < mq_; ++k) outer(qgrad_[static_cast<std::size_t>(k)], D(ml_ + k));
  for (int r = 0; r < me_; ++r) {
    for (const auto& [j, a] : s_.A[static_cast<std::size_t>(r)]) add(n_ + r, j, a);
    add(n_ + r, n_ + r, -kRegD);
  }
  K_.resize(n_ + me_, n_ + me_);
  K_.setFromTriplets(trip_.begin(), trip_.end());
  // Symmetric Ruiz equilibration: barrier weights near the solution span many
  // decades and would otherwise cancel pivots to zero.
  const int nk = n_ + me_;
  S_ = Eigen::VectorXd::Ones(nk);
  Ks_ = K_;
  for (int pass = 0; pass < 4; ++pass) {
    Eigen::VectorXd rmax = Eigen::VectorXd::Zero(nk);
    for (int col = 0; col < nk; ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(Ks_, col); it; ++it) {
        const double a = std::abs(it.value());
        rmax(it.row()) = std::max(rmax(it.row()), a);
        rmax(col) = std::max(rmax(col), a);
      }
    Eigen::VectorXd f(nk);
    for (int i = 0; i < nk; ++i) f(i) = rmax(i) > 0.0 ? 1.0 / std::sqrt(rmax(i)) : 1.0;
    for (int col = 0; col < nk; ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(Ks_, col); it; ++it) it.valueRef() *= f(it.row()) * f(col);
    S_ = S_.cwiseProduct(f);
  }
  if (!analyzed_) {
    ldlt_.analyzePattern(Ks_);
    analyzed_ = true;
  }
  ldlt_.factorize(Ks_);
  return ldlt_.info() == Eigen::Success;
}

void Ipm::solve_kkt(const Eigen::VectorXd& rx, const Eigen::VectorXd& ry, Eigen::VectorXd& dx, Eigen::VectorXd& dy) {
  Eigen::VectorXd rhs(n_ + me_);
  rhs << rx, ry;
  auto scaled_solve = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
    return S_.cwiseProduct(ldlt_.solve(S_.cwiseProduct(r)));
  };
  Eigen::VectorXd u = scaled_solve(rhs);
  // Refine against the unregularized system.
  for (int it = 0; it < 2; ++it) {
    Eigen::VectorXd Ku = K_.selfadjointView<Eigen::Lower>() * u;
    Ku.head(n_) -= kRegP * u.head(n_);
    Ku.tail(me_) += kRegD * u.tail(me_);
    const Eigen::VectorXd res = rhs - Ku;
    if (res.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
    u += scaled_solve(res);
  }
  dx = u.head(n_);
  dy = u.tail(me_);
}

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  return a;
}

// Slack of a quadratic row that stays clearly inside after a step: take the
// true value so curvature does not show up as a primal residual.
Eigen::VectorXd Ipm::reset_slacks(Eigen::VectorXd s, const Eigen::VectorXd& g) const {
  for (int k = ml_; k < ml_ + mq_; ++k)
    if (-g(k) >= 0.1 * s(k)) s(k) = -g(k);
  return s;
}

IpmResult Ipm::run(const QcqpOptions& opt) {
  IpmResult res;
  const int m = this->m();
  Eigen::VectorXd x(n_);
  for (int j = 0; j < n_; ++j) {
    const double l = s_.lb[static_cast<std::size_t>(j)], u = s_.ub[static_cast<std::size_t>(j)];
    if (std::isfinite(l) && std::isfinite(u))
      x(j) = 0.5 * (l + u);
    else if (std::isfinite(l))
      x(j) = l + 1.0;
    else if (std::isfinite(u))
      x(j) = u - 1.0;
    else
      x(j) = 0.0;
  }
  Eigen::VectorXd g;
  eval_g(x, g);
  Eigen::VectorXd s = (-g).cwiseMax(1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me_);
  const Eigen::Map<const Eigen::VectorXd> c(s_.c.data(), n_);
  Eigen::Map<const Eigen::VectorXd> b(s_.b.data(), me_);
  double merit_ref = kInf;
  int tiny_steps = 0;
  Eigen::VectorXd x_best = x;
  double err_best = kInf;
  const char* why = "iteration limit";

  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it;
    eval_g(x, g);
    eval_quad_grads(x);
    const Eigen::VectorXd Qx = Q_times(x), Aty = At_times(y), Jtz = Jt_times(z);
    const Eigen::VectorXd rd = Qx + c + Aty + Jtz;
    const Eigen::VectorXd rp = A_times(x) - b;
    const Eigen::VectorXd rg = g + s;
    const double mu = m > 0 ? s.dot(z) / m : 0.0;
    const double pres = std::max(rp.size() ? rp.lpNorm<Eigen::Infinity>() : 0.0, m ? rg.lpNorm<Eigen::Infinity>() : 0.0);
    const double dres = rd.lpNorm<Eigen::Infinity>();
    res.pres = pres;
    if (!std::isfinite(pres) || !std::isfinite(dres) || !std::isfinite(mu)) {
      res.exit = IpmExit::stalled;
      why = "non-finite residual";
      break;
    }
    // Residuals relative to the magnitude of the terms they balance.
    const double dnorm = 1.0 + std::max({Qx.lpNorm<Eigen::Infinity>(), c.size() ? c.lpNorm<Eigen::Infinity>() : 0.0,
                                         Aty.lpNorm<Eigen::Infinity>(), Jtz.lpNorm<Eigen::Infinity>()});
    const double pnorm = 1.0 + std::max(h_inf_, b_inf_);
    const double fx = 0.5 * x.dot(Qx) + c.dot(x);
    if (pres <= opt.tol * pnorm && dres <= opt.tol * dnorm && s.dot(z) <= opt.tol * (1.0 + std::abs(fx))) {
      res.exit = IpmExit::converged;
      x_best = x;
      break;
    }
    const double err = std::max({pres / pnorm, dres / dnorm, s.dot(z) / (1.0 + std::abs(fx))});
    if (err < err_best) {
      err_best = err;
      x_best = x;
    }
    const double merit = std::max({pres, dres, mu});
    if (log_level() >= LogLevel::debug) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "ipm it %d pres %.3e dres %.3e mu %.3e", it, pres, dres, mu);
      log_debug(buf);
    }
    if (it % 10 == 0) {
      if (it >= 20 && merit > 0.5 * merit_ref) {
        res.exit = IpmExit::stalled;
        why = "no progress";
        break;
      }
      merit_ref = merit;
    }

    const Eigen::VectorXd D = z.cwiseQuotient(s);
    // Proximal damping keeps early steps bounded when the Hessian is singular
    // along free directions; it vanishes with mu.
    const double prox = mq_ > 0 ? std::min(1e-2, mu) : 0.0;
    if (!assemble_and_factor(z, D, prox) && !assemble_and_factor(z, D, prox + 1e-6)) {
      res.exit = IpmExit::stalled;
      why = "singular KKT matrix";
      break;
    }
    auto direction_with = [&](const Eigen::VectorXd& rgv, const Eigen::VectorXd& rc, Eigen::VectorXd& dx,
                              Eigen::VectorXd& dy, Eigen::VectorXd& ds, Eigen::VectorXd& dz) {
      // dz = S^-1 (-rc + Z rg + Z J dx), ds = -rg - J dx
      const Eigen::VectorXd t = (-rc + z.cwiseProduct(rgv)).cwiseQuotient(s);
      solve_kkt(-rd - Jt_times(t), -rp, dx, dy);
      const Eigen::VectorXd Jdx = J_times(dx);
      ds = -rgv - Jdx;
      dz = t + D.cwiseProduct(Jdx);
    };
    auto direction = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dx, Eigen::VectorXd& dy, Eigen::VectorXd& ds,
                         Eigen::VectorXd& dz) { direction_with(rg, rc, dx, dy, ds, dz); };
    Eigen::VectorXd dx, dy, ds, dz;
    direction(s.cwiseProduct(z), dx, dy, ds, dz);
    double a_aff = std::min(max_step(s, ds), max_step(z, dz));
    const double mu_aff = m > 0 ? (s + a_aff * ds).dot(z + a_aff * dz) / m : 0.0;
    const double sigma = mu > 0.0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;
    const Eigen::VectorXd rc = s.cwiseProduct(z) + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(m, sigma * mu);
    direction(rc, dx, dy, ds, dz);
    constexpr double tau = 0.995;
    double alpha = std::min(1.0, tau * std::min(max_step(s, ds), max_step(z, dz)));
    if (mq_ > 0) {
      // Curvature of the quadratic rows can make a full step blow up the
      // primal residual; accept when it decreases or stays near mu.
      const double rp_inf = rp.size() ? rp.lpNorm<Eigen::Infinity>() : 0.0;
      Eigen::VectorXd gn;
      auto acceptable = [&](double a, const Eigen::VectorXd& ddx, const Eigen::VectorXd& dds, const Eigen::VectorXd& ddz) {
        eval_g(x + a * ddx, gn);
        const Eigen::VectorXd sn = reset_slacks(s + a * dds, gn);
        const double pn = std::max((1.0 - a) * rp_inf, (gn + sn).lpNorm<Eigen::Infinity>());
        const double mun = sn.dot(z + a * ddz) / m;
        return pn <= std::max((1.0 - 0.01 * a) * pres, 10.0 * mun);
      };
      if (!acceptable(alpha, dx, ds, dz)) {
        // Second-order correction: move the curvature the linearization
        // missed onto the right-hand side, same factorization.
        eval_g(x + dx, gn);
        const Eigen::VectorXd Jdx = J_times(dx);
        Eigen::VectorXd rg2 = rg;
        for (int k = ml_; k < m; ++k) rg2(k) += std::max(0.0, gn(k) - g(k) - Jdx(k));
        Eigen::VectorXd dx2, dy2, ds2, dz2;
        direction_with(rg2, rc, dx2, dy2, ds2, dz2);
        const double a2 = std::min(1.0, tau * std::min(max_step(s, ds2), max_step(z, dz2)));
        if (dx2.allFinite() && acceptable(a2, dx2, ds2, dz2)) {
          dx = dx2;
          dy = dy2;
          ds = ds2;
          dz = dz2;
          alpha = a2;
        } else {
          for (int bt = 0; bt < 40 && !acceptable(alpha, dx, ds, dz); ++bt) alpha *= 0.5;
        }
      }
    }
    if (log_level() >= LogLevel::debug) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "ipm step %.3e (boundary %.3e) sigma %.2e", alpha,
                    std::min(max_step(s, ds), max_step(z, dz)), sigma);
      log_debug(buf);
    }
    x += alpha * dx;
    y += alpha * dy;
    s += alpha * ds;
    z += alpha * dz;
    if (mq_ > 0) {
      eval_g(x, g);
      s = reset_slacks(s, g);
    }
    tiny_steps = alpha < 1e-8 ? tiny_steps + 1 : 0;
    if (tiny_steps >= 3) {
      res.exit = IpmExit::stalled;
      why = "step length collapsed";
      break;
    }
    res.iterations = it + 1;
  }
  // Rounding near the solution can stop the iteration just short of tol;
  // a best iterate within a loose tolerance is good enough.
  if (res.exit != IpmExit::converged && err_best <= kNearTol) res.exit = IpmExit::converged;
  if (res.exit != IpmExit::converged && log_level() >= LogLevel::debug)
    log_debug(std::string("ipm stopped: ") + why + ", best error " + std::to_string(err_best * 1e9) + "e-9");
  res.x = res.exit == IpmExit::converged ? x_best : x;
  if (!res.x.allFinite()) res.x.setZero();
  res.obj = 0.5 * res.x.dot(Q_times(res.x)) + c.dot(res.x);
  return res;
}

Std phase_one(const Std& s) {
  Std p = s;
  const int t = s.n;
  p.n = s.n + 1;
  p.Q.clear();
  p.c.assign(static_cast<std::size_t>(p.n), 0.0);
  p.c[static_cast<std::size_t>(t)] = 1.0;
  for (auto& row : p.G) row.emplace_back(t, -1.0);
  for (auto& q : p.QR) q.q.emplace_back(t, -1.0);
  p.G.push_back({{t, -1.0}});
  p.h.push_back(1.0);
  p.lb.push_back(-1.0);
  p.ub.push_back(kInf);
  return p;
}

struct ContinuousResult {
  SolveStatus status = SolveStatus::numerical_failure;
  std::vector<double> x;
  int iterations = 0;
  std::string message;
};

ContinuousResult solve_bounds(const Problem& p, const std::vector<double>& lo, const std::vector<double>& hi,
                              const QcqpOptions& opt) {
  ContinuousResult out;
  Reduced R = presolve(p, lo, hi);
  if (R.infeasible) {
    out.status = SolveStatus::infeasible;
    out.message = R.why;
    return out;
  }
  std::vector<double> x = R.x_fixed;
  if (R.s.n > 0) {
    Ipm ipm(R.s);
    const IpmResult r = ipm.run(opt);
    out.iterations = r.iterations;
    if (r.exit != IpmExit::converged) {
      const Std p1 = phase_one(R.s);
      Ipm ipm1(p1);
      const IpmResult r1 = ipm1.run(opt);
      out.iterations += r1.iterations;
      const double t = r1.x(R.s.n);
      if (r1.exit == IpmExit::converged && t > 1e-7) {
        out.status = SolveStatus::infeasible;
        out.message = "phase-I certificate: max scaled violation " + std::to_string(t);
      } else if (r1.exit != IpmExit::converged && r1.pres > 1e-6) {
        out.status = SolveStatus::infeasible;
        out.message = "equality constraints inconsistent";
      } else {
        out.status = SolveStatus::numerical_failure;
        out.message = "interior point stalled on a feasible problem";
      }
      return out;
    }
    for (int k = 0; k < R.s.n; ++k) {
      const int j = R.orig[static_cast<std::size_t>(k)];
      x[static_cast<std::size_t>(j)] = std::clamp(r.x(k) * R.d[static_cast<std::size_t>(k)], lo[static_cast<std::size_t>(j)],
                                                  hi[static_cast<std::size_t>(j)]);
    }
  } else {
    // Everything fixed: check the remaining quadratic rows.
    for (const auto& q : p.qrows)
      if (p.qrow_value(q, x) > feas_tol(0.0)) {
        out.status = SolveStatus::infeasible;
        out.message = "quadratic row " + q.name + " violated";
        return out;
      }
  }
  out.status = SolveStatus::optimal;
  out.x = std::move(x);
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SolveReport solve_qcqp(const Problem& p, const QcqpOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  SolveReport rep;
  const ContinuousResult r = solve_bounds(p, p.lb, p.ub, opt);
  rep.status = r.status;
  rep.iterations = r.iterations;
  rep.message = r.message;
  rep.nodes = 1;
  if (r.status == SolveStatus::optimal) {
    rep.x = r.x;
    rep.objective = p.objective(r.x);
    // Integrality is not part of the relaxation.
    Problem relaxed_view = p;
    relaxed_view.binaries.clear();
    rep.violation = relaxed_view.max_violation(r.x);
    if (rep.violation.normalized > 1e-6) {
      rep.status = SolveStatus::numerical_failure;
      rep.message = "solution violates " + rep.violation.where;
    }
  }
  rep.wall_ms = elapsed_ms(t0);
  return rep;
}

SolveReport solve_fixed(const Problem& p, const std::vector<double>& bits, const QcqpOptions& opt) {
  if (bits.size() != p.binaries.size()) throw std::invalid_argument("solve_fixed: one value per binary required");
  Problem q = p;
  for (std::size_t k = 0; k < bits.size(); ++k) {
    const auto j = static_cast<std::size_t>(p.binaries[k]);
    q.lb[j] = q.ub[j] = bits[k] >= 0.5 ? 1.0 : 0.0;
  }
  SolveReport rep = solve_qcqp(q, opt);
  if (rep.status == SolveStatus::optimal) rep.violation = p.max_violation(rep.x);
  return rep;
}

namespace {

struct Node {
  double bound;
  long seq;
  std::vector<signed char> fix;  // -1 free, 0, 1
  std::vector<double> x;         // relaxation solution
  bool operator>(const Node& o) const { return bound != o.bound ? bound > o.bound : seq > o.seq; }
};

}  // namespace

SolveReport solve_miqcqp(const Problem& p, const MiqcqpOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  p.validate();
  SolveReport rep;
  const std::size_t nb = p.binaries.size();
  if (!opt.warm_binaries.empty() && opt.warm_binaries.size() != nb) {
    throw std::invalid_argument("warm_binaries must hold one value per binary");
  }

  double inc_obj = kInf;
  std::vector<double> inc_x;
  int iterations = 0;
  auto try_incumbent = [&](const std::vector<double>& bits) {
    Problem q = p;
    for (std::size_t k = 0; k < nb; ++k) {
      const auto j = static_cast<std::size_t>(p.binaries[k]);
      q.lb[j] = q.ub[j] = bits[k] >= 0.5 ? 1.0 : 0.0;
    }
    const auto r = solve_bounds(q, q.lb, q.ub, opt.qp);
    iterations += r.iterations;
    if (r.status != SolveStatus::optimal) return;
    const double f = p.objective(r.x);
    if (f < inc_obj) {
      inc_obj = f;
      inc_x = r.x;
    }
  };
  int dropped = 0;
  std::string drop_msg;
  auto relax = [&](const std::vector<signed char>& fix, std::vector<double>& x, double& bound) {
    std::vector<double> lo = p.lb, hi = p.ub;
    for (std::size_t k = 0; k < nb; ++k) {
      if (fix[k] < 0) continue;
      const auto j = static_cast<std::size_t>(p.binaries[k]);
      lo[j] = hi[j] = fix[k];
    }
    const auto r = solve_bounds(p, lo, hi, opt.qp);
    iterations += r.iterations;
    ++rep.nodes;
    if (r.status == SolveStatus::numerical_failure) {
      ++dropped;
      drop_msg = r.message;
      log_warn("branch-and-bound node dropped: " + r.message);
    }
    if (r.status != SolveStatus::optimal) return false;
    x = r.x;
    bound = p.objective(x);
    return true;
  };
  auto prune_level = [&]() { return inc_obj - 1e-9 * std::max(1.0, std::abs(inc_obj)); };
  auto out_of_time = [&]() { return opt.time_limit_ms > 0.0 && elapsed_ms(t0) > opt.time_limit_ms; };

  if (!opt.warm_binaries.empty()) try_incumbent(opt.warm_binaries);

  std::priority_queue<Node, std::vector<Node>, std::greater<Node>> open;
  long seq = 0;
  {
    Node root{0.0, seq++, std::vector<signed char>(nb, -1), {}};
    if (!relax(root.fix, root.x, root.bound)) {
      if (!inc_x.empty()) {
        rep.status = SolveStatus::optimal;
        log_warn("root relaxation failed but the warm start is feasible");
      } else if (dropped > 0) {
        rep.status = SolveStatus::numerical_failure;
        rep.message = drop_msg;
      } else {
        rep.status = SolveStatus::infeasible;
      }
      rep.iterations = iterations;
      rep.wall_ms = elapsed_ms(t0);
      if (!inc_x.empty()) {
        rep.x = inc_x;
        rep.objective = inc_obj;
        rep.violation = p.max_violation(inc_x);
      }
      return rep;
    }
    if (opt.rounding_heuristic && nb > 0) {
      std::vector<double> bits(nb);
      for (std::size_t k = 0; k < nb; ++k) bits[k] = root.x[static_cast<std::size_t>(p.binaries[k])] >= 0.5 ? 1.0 : 0.0;
      if (opt.warm_binaries != bits) try_incumbent(bits);
    }
    open.push(std::move(root));
  }

  bool limited = false;
  SolveStatus limit_status = SolveStatus::optimal;
  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (node.bound >= prune_level()) continue;
    // Most fractional free bit; earliest index wins ties.
    int branch = -1;
    double best_frac = 1e-9;
    for (std::size_t k = 0; k < nb; ++k) {
      if (node.fix[k] >= 0) continue;
      const double v = node.x[static_cast<std::size_t>(p.binaries[k])];
      const double frac = std::min(v, 1.0 - v);
      if (frac > best_frac) {
        best_frac = frac;
        branch = static_cast<int>(k);
      }
    }
    if (branch < 0) {
      // Relaxation is integral: re-solve with every bit fixed for exact semantics.
      std::vector<double> bits(nb);
      for (std::size_t k = 0; k < nb; ++k)
        bits[k] = node.fix[k] >= 0 ? node.fix[k] : (node.x[static_cast<std::size_t>(p.binaries[k])] >= 0.5 ? 1.0 : 0.0);
      bool all_fixed = true;
      for (auto f : node.fix) all_fixed = all_fixed && f >= 0;
      if (all_fixed) {
        if (node.bound < inc_obj) {
          inc_obj = node.bound;
          inc_x = node.x;
        }
      } else {
        try_incumbent(bits);
      }
      continue;
    }
    if (rep.nodes + 2 > opt.node_limit) {
      limited = true;
      limit_status = SolveStatus::node_limit;
      open.push(std::move(node));
      break;
    }
    if (out_of_time()) {
      limited = true;
      limit_status = SolveStatus::time_limit;
      open.push(std::move(node));
      break;
    }
    const auto bk = static_cast<std::size_t>(branch);
    const double v = node.x[static_cast<std::size_t>(p.binaries[bk])];
    signed char first = v >= 0.5 ? 1 : 0;
    if (!opt.warm_binaries.empty()) first = opt.warm_binaries[bk] >= 0.5 ? 1 : 0;
    for (signed char val : {first, static_cast<signed char>(1 - first)}) {
      Node child{0.0, seq++, node.fix, {}};
      child.fix[bk] = val;
      if (!relax(child.fix, child.x, child.bound)) continue;
      if (child.bound >= prune_level()) continue;
      open.push(std::move(child));
    }
  }

  rep.iterations = iterations;
  if (!inc_x.empty()) {
    rep.x = inc_x;
    rep.objective = inc_obj;
    rep.violation = p.max_violation(inc_x);
  }
  if (!inc_x.empty() && rep.violation.normalized > 1e-6) {
    rep.status = SolveStatus::numerical_failure;
    rep.message = "incumbent violates " + rep.violation.where;
  } else if (limited) {
    rep.status = limit_status;
  } else if (inc_x.empty() && dropped > 0) {
    // Some subtree could not be solved, so infeasibility is not proven.
    rep.status = SolveStatus::numerical_failure;
    rep.message = drop_msg;
  } else {
    rep.status = inc_x.empty() ? SolveStatus::infeasible : SolveStatus::optimal;
  }
  rep.wall_ms = elapsed_ms(t0);
  return rep;
}

}  // namespace ecohmpc
