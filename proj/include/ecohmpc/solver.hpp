#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace ecohmpc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Entry of a symmetric matrix, stored once with i <= j.
struct SymEntry {
  int i = 0;
  int j = 0;
  double v = 0.0;
};

using SparseVec = std::vector<std::pair<int, double>>;

/// lo <= a^T x <= hi; lo == hi is an equality.
struct LinearRow {
  std::string name;
  SparseVec a;
  double lo = -kInf;
  double hi = kInf;
};

/// 1/2 x^T P x + q^T x + r <= 0 with P positive semidefinite.
struct QuadRow {
  std::string name;
  std::vector<SymEntry> P;
  SparseVec q;
  double r = 0.0;
};

struct Violation {
  double normalized = 0.0;  ///< violation over the magnitude of the row's terms at typical values
  double absolute = 0.0;
  std::string where;
};

/// Standard-form (MI)QCQP:
///   min 1/2 x^T Q x + c^T x + c0
///   s.t. linear rows, convex quadratic rows, lb <= x <= ub, x_j in {0,1} for binaries.
/// `scale` holds a typical magnitude per variable; the solver works in x/scale.
class Problem {
 public:
  int add_var(std::string name, double lb, double ub, double scale = 1.0);
  int num_vars() const { return static_cast<int>(names.size()); }
  /// Adds v to Q_ij (and Q_ji); on the diagonal the objective gains v x_i^2 / 2.
  void add_quad_cost(int i, int j, double v);
  void add_lin_cost(int j, double v) { c.at(static_cast<std::size_t>(j)) += v; }
  void add_row(LinearRow row) { rows.push_back(std::move(row)); }
  void add_qrow(QuadRow row) { qrows.push_back(std::move(row)); }
  void mark_binary(int j) { binaries.push_back(j); }
  int index_of(const std::string& name) const;

  double objective(const std::vector<double>& x) const;
  double row_value(const LinearRow& row, const std::vector<double>& x) const;
  double qrow_value(const QuadRow& row, const std::vector<double>& x) const;
  /// Worst violation over bounds, rows, quadratic rows and integrality.
  Violation max_violation(const std::vector<double>& x) const;
  /// Throws std::invalid_argument on index errors, crossed bounds, bad binaries
  /// or a quadratic part that is not positive semidefinite.
  void validate() const;

  std::string to_json() const;
  static Problem from_json(const std::string& text);

  std::vector<std::string> names;
  std::vector<double> lb, ub, scale;
  std::vector<SymEntry> Q;
  std::vector<double> c;
  double c0 = 0.0;
  std::vector<LinearRow> rows;
  std::vector<QuadRow> qrows;
  std::vector<int> binaries;
};

enum class SolveStatus { optimal, infeasible, node_limit, time_limit, numerical_failure };
const char* to_string(SolveStatus s);

struct SolveReport {
  SolveStatus status = SolveStatus::numerical_failure;
  double objective = kInf;
  std::vector<double> x;
  int nodes = 0;        ///< branch-and-bound relaxations solved
  int iterations = 0;   ///< interior-point iterations, summed over all solves
  double wall_ms = 0.0;
  Violation violation;
  std::string message;
};

struct QcqpOptions {
  double tol = 1e-9;   ///< residual and complementarity tolerance in scaled units
  int max_iter = 80;
};

/// Convex QCQP by a Mehrotra predictor-corrector primal-dual interior-point
/// method (binaries are relaxed to their bounds). Deterministic: the start point
/// depends only on the problem. Infeasibility is certified by a phase-I problem
/// whose optimal objective stays above tolerance.
SolveReport solve_qcqp(const Problem& p, const QcqpOptions& opt = {});

struct MiqcqpOptions {
  int node_limit = 10000;
  double time_limit_ms = 150.0;  ///< <= 0 disables the limit
  /// One value per entry of Problem::binaries: incumbent candidate and child order.
  std::vector<double> warm_binaries;
  bool rounding_heuristic = true;
  QcqpOptions qp;
};

/// Best-first branch-and-bound over the binaries, branching on the most
/// fractional bit (earliest index on ties). Incumbents always come from
/// re-solves with every bit fixed, so binaries are exactly 0 or 1.
SolveReport solve_miqcqp(const Problem& p, const MiqcqpOptions& opt = {});

/// Solves p with the given binaries fixed; used by the enumeration oracles.
SolveReport solve_fixed(const Problem& p, const std::vector<double>& bits, const QcqpOptions& opt = {});

}  // namespace ecohmpc
