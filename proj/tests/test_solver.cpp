#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "ecohmpc/solver.hpp"

using namespace ecohmpc;

namespace {

// Accelerated projected gradient, the independent first-order reference.
template <class Proj>
Eigen::VectorXd fista(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, Eigen::VectorXd x, Proj proj, int iters = 200000) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
  const double L = std::max(1e-12, es.eigenvalues().maxCoeff());
  Eigen::VectorXd y = x, xp = x;
  double t = 1.0;
  for (int k = 0; k < iters; ++k) {
    Eigen::VectorXd xn = proj(y - (Q * y + c) / L);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = xn + ((t - 1.0) / tn) * (xn - xp);
    if ((xn - xp).lpNorm<Eigen::Infinity>() < 1e-15 && k > 100) {
      xp = xn;
      break;
    }
    xp = xn;
    t = tn;
  }
  return xp;
}

double qp_obj(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(Q * x) + c.dot(x);
}

Eigen::MatrixXd random_psd(std::mt19937& rng, int n, double min_eig) {
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = N(rng);
  return M * M.transpose() / n + min_eig * Eigen::MatrixXd::Identity(n, n);
}

void set_objective(Problem& p, const Eigen::MatrixXd& Q, const Eigen::VectorXd& c) {
  for (int i = 0; i < Q.rows(); ++i)
    for (int j = i; j < Q.cols(); ++j)
      if (Q(i, j) != 0.0) p.add_quad_cost(i, j, Q(i, j));
  for (int i = 0; i < c.size(); ++i) p.add_lin_cost(i, c(i));
}

std::vector<double> bits_of(int mask, int nb) {
  std::vector<double> b(static_cast<std::size_t>(nb));
  for (int k = 0; k < nb; ++k) b[static_cast<std::size_t>(k)] = (mask >> k) & 1;
  return b;
}

}  // namespace

TEST(Qcqp, ScalarQp) {
  Problem p;
  p.add_var("x", 0.0, 10.0);
  p.add_quad_cost(0, 0, 1.0);
  p.add_lin_cost(0, -1.0);
  const auto r = solve_qcqp(p);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.x[0], 1.0, 1e-8);
  EXPECT_NEAR(r.objective, -0.5, 1e-9);
}

TEST(Qcqp, DiskExamples) {
  Problem p;
  p.add_var("x", 0.0, kInf);
  p.add_var("y", 0.0, kInf);
  p.add_lin_cost(0, 1.0);
  p.add_lin_cost(1, 1.0);
  p.add_qrow({"disk", {{0, 0, 2.0}, {1, 1, 2.0}}, {}, -2.0});
  auto r = solve_qcqp(p);
  ASSERT_EQ(r.status, SolveStatus::optimal) << r.message;
  EXPECT_NEAR(r.objective, 0.0, 1e-7);
  EXPECT_NEAR(r.x[0], 0.0, 1e-7);
  EXPECT_NEAR(r.x[1], 0.0, 1e-7);

  p.add_row({"sum", {{0, 1.0}, {1, 1.0}}, 2.0, kInf});
  r = solve_qcqp(p);
  ASSERT_EQ(r.status, SolveStatus::optimal) << r.message;
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
  EXPECT_NEAR(r.x[1], 1.0, 1e-6);
  // Grid check: no feasible grid point does better than 2.
  double best = kInf;
  for (int i = 0; i <= 400; ++i)
    for (int j = 0; j <= 400; ++j) {
      const double x = 1.5 * i / 400, y = 1.5 * j / 400;
      if (x * x + y * y <= 2.0 && x + y >= 2.0) best = std::min(best, x + y);
    }
  EXPECT_GE(best, r.objective - 1e-9);
}

TEST(Qcqp, RandomBoxQpMatchesProjectedGradient) {
  std::mt19937 rng(11);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 15; ++trial) {
    const int n = 3 + trial % 6;
    const Eigen::MatrixXd Q = random_psd(rng, n, 0.05);
    Eigen::VectorXd c(n), lo(n), hi(n);
    Problem p;
    for (int i = 0; i < n; ++i) {
      c(i) = 3.0 * N(rng);
      lo(i) = -std::abs(N(rng));
      hi(i) = std::abs(N(rng));
      // Mixed variable magnitudes exercise the column scaling.
      p.add_var("x" + std::to_string(i), lo(i), hi(i), i % 2 ? 10.0 : 0.1);
    }
    set_objective(p, Q, c);
    const auto r = solve_qcqp(p);
    ASSERT_EQ(r.status, SolveStatus::optimal);
    const Eigen::VectorXd ref =
        fista(Q, c, Eigen::VectorXd::Zero(n), [&](const Eigen::VectorXd& v) { return v.cwiseMax(lo).cwiseMin(hi); });
    const double fr = qp_obj(Q, c, ref);
    EXPECT_NEAR(r.objective, fr, 1e-5 * std::max(1.0, std::abs(fr))) << "trial " << trial;
    EXPECT_LE(r.violation.normalized, 1e-6);
  }
}

TEST(Qcqp, RandomBallQcqpMatchesProjectedGradient) {
  std::mt19937 rng(5);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 15; ++trial) {
    const int n = 2 + trial % 5;
    const Eigen::MatrixXd Q = random_psd(rng, n, 0.01 * (trial % 3));
    Eigen::VectorXd c(n), x0(n);
    for (int i = 0; i < n; ++i) {
      c(i) = 5.0 * N(rng);
      x0(i) = N(rng);
    }
    const double R = 0.5 + std::abs(N(rng));
    Problem p;
    for (int i = 0; i < n; ++i) p.add_var("x" + std::to_string(i), -kInf, kInf);
    set_objective(p, Q, c);
    // |x - x0|^2 <= R^2
    QuadRow ball{"ball", {}, {}, x0.squaredNorm() - R * R};
    for (int i = 0; i < n; ++i) {
      ball.P.push_back({i, i, 2.0});
      ball.q.emplace_back(i, -2.0 * x0(i));
    }
    p.add_qrow(ball);
    const auto r = solve_qcqp(p);
    ASSERT_EQ(r.status, SolveStatus::optimal) << r.message << " trial " << trial;
    const Eigen::VectorXd ref = fista(Q, c, x0, [&](const Eigen::VectorXd& v) {
      const Eigen::VectorXd d = v - x0;
      const double nd = d.norm();
      return nd <= R ? v : Eigen::VectorXd(x0 + d * (R / nd));
    });
    const double fr = qp_obj(Q, c, ref);
    EXPECT_NEAR(r.objective, fr, 1e-5 * std::max(1.0, std::abs(fr))) << "trial " << trial;
    EXPECT_LE(r.violation.normalized, 1e-6);
  }
}

TEST(Qcqp, InfeasibleIsCertified) {
  Problem p;
  p.add_var("x", -10, 10);
  p.add_var("y", -10, 10);
  p.add_qrow({"disk", {{0, 0, 2.0}, {1, 1, 2.0}}, {}, -1.0});
  p.add_row({"far", {{0, 1.0}, {1, 1.0}}, 3.0, kInf});
  const auto r = solve_qcqp(p);
  EXPECT_EQ(r.status, SolveStatus::infeasible);
  EXPECT_FALSE(r.message.empty());

  Problem q;
  q.add_var("x", 0, 5);
  q.add_var("y", 0, 5);
  q.add_row({"a", {{0, 1.0}, {1, 1.0}}, 8.0, kInf});
  q.add_row({"b", {{0, 1.0}, {1, -1.0}}, 0.0, 0.0});
  q.add_row({"c", {{0, 1.0}, {1, 2.0}}, -kInf, 6.0});
  EXPECT_EQ(solve_qcqp(q).status, SolveStatus::infeasible);
}

TEST(Qcqp, EqualitiesAndPresolve) {
  // min (x-3)^2 + (y-1)^2 + z^2, x + y + z = 1, z fixed via a singleton row.
  Problem p;
  p.add_var("x", -kInf, kInf);
  p.add_var("y", -kInf, kInf);
  p.add_var("z", -kInf, kInf);
  for (int i = 0; i < 3; ++i) p.add_quad_cost(i, i, 2.0);
  p.add_lin_cost(0, -6.0);
  p.add_lin_cost(1, -2.0);
  p.c0 = 10.0;
  p.add_row({"sum", {{0, 1}, {1, 1}, {2, 1}}, 1.0, 1.0});
  p.add_row({"zfix", {{2, 2.0}}, 1.0, 1.0});
  const auto r = solve_qcqp(p);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  // x + y = 0.5 and x - 3 = y - 1
  EXPECT_NEAR(r.x[2], 0.5, 1e-12);
  EXPECT_NEAR(r.x[0], 1.25, 1e-7);
  EXPECT_NEAR(r.x[1], -0.75, 1e-7);
  EXPECT_NEAR(r.objective, 2 * 1.75 * 1.75 + 0.25, 1e-7);
}

TEST(Qcqp, ValidateRejectsBadProblems) {
  Problem p;
  p.add_var("x", 0, 1);
  p.add_var("y", 0, 1);
  p.add_quad_cost(0, 1, 1.0);  // indefinite
  EXPECT_THROW(p.validate(), std::invalid_argument);
  Problem q;
  q.add_var("x", 0, 2);
  q.mark_binary(0);
  EXPECT_THROW(q.validate(), std::invalid_argument);
  Problem r;
  r.add_var("x", 1, 0);
  EXPECT_THROW(r.validate(), std::invalid_argument);
}

TEST(Qcqp, JsonRoundTrip) {
  Problem p;
  p.add_var("a", -kInf, 3.0, 2.0);
  p.add_var("b", 0.0, 1.0);
  p.mark_binary(1);
  p.add_quad_cost(0, 0, 1.5);
  p.add_lin_cost(1, -0.25);
  p.c0 = 7.0;
  p.add_row({"r", {{0, 1.0}, {1, -2.0}}, -kInf, 4.0});
  p.add_qrow({"q", {{0, 0, 1.0}}, {{1, 1.0}}, -5.0});
  const Problem back = Problem::from_json(p.to_json());
  EXPECT_EQ(back.names, p.names);
  EXPECT_TRUE(std::isinf(back.lb[0]) && back.lb[0] < 0);
  EXPECT_EQ(back.ub[0], 3.0);
  EXPECT_EQ(back.binaries, p.binaries);
  EXPECT_EQ(back.to_json(), p.to_json());
  const std::vector<double> x{1.0, 1.0};
  EXPECT_DOUBLE_EQ(back.objective(x), p.objective(x));
  EXPECT_THROW(Problem::from_json("{\"names\": 3}"), std::invalid_argument);
}

namespace {

// Random facility-style MIQP: x_i in [0, U y_i], fixed cost per open bit,
// coupled convex quadratic cost pushes toward a target.
struct Miqp {
  Problem p;
  Eigen::MatrixXd Q;
  Eigen::VectorXd c, fc, U;
  int n = 0;
};

Miqp random_miqp(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> Uni(0.0, 1.0);
  Miqp m;
  m.n = n;
  m.Q = random_psd(rng, n, 0.2);
  m.c = Eigen::VectorXd(n);
  m.fc = Eigen::VectorXd(n);
  m.U = Eigen::VectorXd(n);
  for (int i = 0; i < n; ++i) m.p.add_var("x" + std::to_string(i), 0.0, kInf, 1.0);
  for (int i = 0; i < n; ++i) m.p.add_var("y" + std::to_string(i), 0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    m.c(i) = -3.0 * Uni(rng);
    m.fc(i) = 1.5 * Uni(rng);
    m.U(i) = 1.0 + 2.0 * Uni(rng);
    m.p.add_lin_cost(n + i, m.fc(i));
    m.p.add_row({"link" + std::to_string(i), {{i, 1.0}, {n + i, -m.U(i)}}, -kInf, 0.0});
    m.p.mark_binary(n + i);
  }
  set_objective(m.p, m.Q, m.c);
  return m;
}

double miqp_oracle(const Miqp& m) {
  double best = kInf;
  for (int mask = 0; mask < (1 << m.n); ++mask) {
    Eigen::VectorXd hi(m.n);
    double fixed = 0.0;
    for (int i = 0; i < m.n; ++i) {
      const bool on = (mask >> i) & 1;
      hi(i) = on ? m.U(i) : 0.0;
      fixed += on ? m.fc(i) : 0.0;
    }
    const Eigen::VectorXd x = fista(m.Q, m.c, Eigen::VectorXd::Zero(m.n),
                                    [&](const Eigen::VectorXd& v) { return v.cwiseMax(0.0).cwiseMin(hi); }, 20000);
    best = std::min(best, qp_obj(m.Q, m.c, x) + fixed);
  }
  return best;
}

}  // namespace

TEST(Miqcqp, MatchesEnumeration) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Miqp m = random_miqp(rng, 3 + trial % 4);
    MiqcqpOptions opt;
    opt.time_limit_ms = 0.0;
    const auto r = solve_miqcqp(m.p, opt);
    ASSERT_EQ(r.status, SolveStatus::optimal);
    const double oracle = miqp_oracle(m);
    EXPECT_NEAR(r.objective, oracle, 1e-6 * std::max(1.0, std::abs(oracle))) << "trial " << trial;
    EXPECT_LE(r.violation.normalized, 1e-6);
    for (int j : m.p.binaries) EXPECT_TRUE(r.x[static_cast<std::size_t>(j)] == 0.0 || r.x[static_cast<std::size_t>(j)] == 1.0);
  }
}

TEST(Miqcqp, AllFixedIsOneNode) {
  std::mt19937 rng(8);
  Miqp m = random_miqp(rng, 4);
  for (int i = 0; i < 4; ++i) m.p.lb[static_cast<std::size_t>(4 + i)] = m.p.ub[static_cast<std::size_t>(4 + i)] = i % 2;
  const auto r = solve_miqcqp(m.p);
  const auto q = solve_qcqp(m.p);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_EQ(r.nodes, 1);
  EXPECT_NEAR(r.objective, q.objective, 1e-12 * std::max(1.0, std::abs(q.objective)));
}

TEST(Miqcqp, WarmStartNeverExploresMore) {
  std::mt19937 rng(21);
  for (int trial = 0; trial < 8; ++trial) {
    Miqp m = random_miqp(rng, 6);
    MiqcqpOptions cold;
    cold.time_limit_ms = 0.0;
    cold.rounding_heuristic = false;
    const auto a = solve_miqcqp(m.p, cold);
    ASSERT_EQ(a.status, SolveStatus::optimal);
    MiqcqpOptions warm = cold;
    for (int j : m.p.binaries) warm.warm_binaries.push_back(a.x[static_cast<std::size_t>(j)]);
    const auto b = solve_miqcqp(m.p, warm);
    ASSERT_EQ(b.status, SolveStatus::optimal);
    EXPECT_LE(b.nodes, a.nodes) << "trial " << trial;
    EXPECT_NEAR(a.objective, b.objective, 1e-8 * std::max(1.0, std::abs(a.objective)));
  }
}

TEST(Miqcqp, RelaxationBoundsEveryCompletion) {
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> coin(0, 2);
  for (int trial = 0; trial < 10; ++trial) {
    Miqp m = random_miqp(rng, 5);
    Problem node = m.p;
    std::vector<int> fix(5);
    for (int i = 0; i < 5; ++i) {
      fix[static_cast<std::size_t>(i)] = coin(rng) - 1;  // -1 free
      if (fix[static_cast<std::size_t>(i)] >= 0)
        node.lb[static_cast<std::size_t>(5 + i)] = node.ub[static_cast<std::size_t>(5 + i)] = fix[static_cast<std::size_t>(i)];
    }
    const auto relax = solve_qcqp(node);
    ASSERT_EQ(relax.status, SolveStatus::optimal);
    for (int mask = 0; mask < 32; ++mask) {
      bool consistent = true;
      for (int i = 0; i < 5; ++i)
        if (fix[static_cast<std::size_t>(i)] >= 0 && fix[static_cast<std::size_t>(i)] != ((mask >> i) & 1)) consistent = false;
      if (!consistent) continue;
      const auto comp = solve_fixed(m.p, bits_of(mask, 5));
      ASSERT_EQ(comp.status, SolveStatus::optimal);
      // Two solves, each accurate to the 1e-9 relative duality gap.
      EXPECT_LE(relax.objective, comp.objective + 2e-9 * std::max(1.0, std::abs(comp.objective)))
          << "gap " << relax.objective - comp.objective;
    }
  }
}

TEST(Miqcqp, Deterministic) {
  std::mt19937 rng(9);
  Miqp m = random_miqp(rng, 6);
  MiqcqpOptions opt;
  opt.time_limit_ms = 0.0;
  const auto a = solve_miqcqp(m.p, opt);
  const auto b = solve_miqcqp(m.p, opt);
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.nodes, b.nodes);
  EXPECT_NEAR(a.objective, b.objective, 1e-10);
}

TEST(Miqcqp, InfeasibleAndLimits) {
  Problem p;
  p.add_var("x", 0, 10);
  p.add_var("b", 0, 1);
  p.mark_binary(1);
  p.add_row({"need", {{0, 1.0}}, 5.0, kInf});
  p.add_row({"cap", {{0, 1.0}, {1, -2.0}}, -kInf, 0.0});
  EXPECT_EQ(solve_miqcqp(p).status, SolveStatus::infeasible);

  std::mt19937 rng(1);
  Miqp m = random_miqp(rng, 8);
  MiqcqpOptions opt;
  opt.time_limit_ms = 0.0;
  opt.node_limit = 3;
  opt.rounding_heuristic = true;
  const auto r = solve_miqcqp(m.p, opt);
  if (r.status != SolveStatus::optimal) {
    EXPECT_EQ(r.status, SolveStatus::node_limit);
    EXPECT_LE(r.nodes, 3);
  }
}

TEST(Miqcqp, FractionalRelaxationNeedsBranching) {
  // min -x - y + 0.1 b1 + 0.1 b2, x <= b1, y <= b2, b1 + b2 <= 1.5 -> one bit on.
  Problem p;
  p.add_var("x", 0, 1);
  p.add_var("y", 0, 1);
  p.add_var("b1", 0, 1);
  p.add_var("b2", 0, 1);
  p.mark_binary(2);
  p.mark_binary(3);
  p.add_lin_cost(0, -1.0);
  p.add_lin_cost(1, -1.0);
  p.add_lin_cost(2, 0.1);
  p.add_lin_cost(3, 0.1);
  p.add_quad_cost(0, 0, 0.2);
  p.add_quad_cost(1, 1, 0.2);
  p.add_row({"l1", {{0, 1.0}, {2, -1.0}}, -kInf, 0.0});
  p.add_row({"l2", {{1, 1.0}, {3, -1.0}}, -kInf, 0.0});
  p.add_row({"card", {{2, 1.0}, {3, 1.0}}, -kInf, 1.5});
  MiqcqpOptions opt;
  opt.rounding_heuristic = false;
  const auto r = solve_miqcqp(p, opt);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.objective, -1.0 + 0.1 + 0.1, 1e-8);
  EXPECT_GT(r.nodes, 1);
  EXPECT_EQ(r.x[2] + r.x[3], 1.0);
}
