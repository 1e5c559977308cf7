#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ecohmpc/config.hpp"
#include "ecohmpc/error.hpp"
#include "ecohmpc/mapfit.hpp"
#include "ecohmpc/powertrain.hpp"

using namespace ecohmpc;

namespace {

const std::filesystem::path kData = ECOHMPC_DATA_DIR;

std::vector<PowerSample> grid_samples(const QuadCoeffs& q, double v0, double v1, double F1, int R = 30, int S = 30) {
  std::vector<PowerSample> out;
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < S; ++j) {
      const double v = v0 + (v1 - v0) * i / (R - 1), F = F1 * j / (S - 1);
      out.push_back({v, F, q(v, F)});
    }
  return out;
}

double sse(const QuadCoeffs& q, const std::vector<PowerSample>& s) {
  double e = 0.0;
  for (const auto& p : s) e += std::pow(q(p.v, p.F) - p.P, 2);
  return e;
}

// Unconstrained optimum by the normal equations in raw units, scaled per column.
double unconstrained_sse(const std::vector<PowerSample>& s) {
  Eigen::MatrixXd A(static_cast<Eigen::Index>(s.size()), 6);
  Eigen::VectorXd b(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double v = s[i].v, F = s[i].F;
    A.row(static_cast<Eigen::Index>(i)) << 1, v, F, v * v, F * F, v * F;
    b(static_cast<Eigen::Index>(i)) = s[i].P;
  }
  const Eigen::VectorXd d = A.colwise().norm().cwiseInverse();
  const Eigen::MatrixXd As = A * d.asDiagonal();
  const Eigen::VectorXd z = (As.transpose() * As).ldlt().solve(As.transpose() * b);
  return (As * z - b).squaredNorm();
}

// Constrained optimum when it lies on the PSD boundary: the quadratic block is
// lam * u u^T with u = (cos phi / sv, sin phi / sF), lam >= 0. For fixed phi
// the problem is linear least squares; scan phi densely and take the best.
double boundary_scan_sse(const std::vector<PowerSample>& s, double sv, double sF) {
  double best = INFINITY;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double phi = std::numbers::pi * k / n;
    const double ux = std::cos(phi) / sv, uy = std::sin(phi) / sF;
    Eigen::MatrixXd A(static_cast<Eigen::Index>(s.size()), 4);
    Eigen::VectorXd b(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double q = ux * s[i].v + uy * s[i].F;
      A.row(static_cast<Eigen::Index>(i)) << 1, s[i].v / sv, s[i].F / sF, q * q;
      b(static_cast<Eigen::Index>(i)) = s[i].P;
    }
    Eigen::Vector4d z = A.colPivHouseholderQr().solve(b);
    if (z(3) < 0) z = Eigen::Vector4d::Zero(), z.head<3>() = A.leftCols<3>().colPivHouseholderQr().solve(b);
    best = std::min(best, (A * z - b).squaredNorm());
  }
  return best;
}

}  // namespace

TEST(QuadCoeffs, EvalAndHessian) {
  QuadCoeffs q{100, 2, 0.5, 3, 0.01, 0.1};
  EXPECT_DOUBLE_EQ(q(0, 0), 100.0);
  EXPECT_NEAR(q(10, 1000), 100 + 20 + 500 + 300 + 10000 + 1000, 1e-9);
  // Eigenvalues of [[6, 0.1], [0.1, 0.02]] by the quadratic formula.
  const double tr = 6.02, det = 6 * 0.02 - 0.01;
  EXPECT_NEAR(q.hessian_min_eig(), 0.5 * (tr - std::sqrt(tr * tr - 4 * det)), 1e-12);
}

TEST(Fit, RecoversKnownConvexQuadratic) {
  const QuadCoeffs truth{100, 2, 0.5, 3, 0.01, 0.1};
  const auto r = fit(grid_samples(truth, 2.0, 14.0, 12000.0));
  const double xs[6] = {r.coeffs.x00, r.coeffs.x10, r.coeffs.x01, r.coeffs.x20, r.coeffs.x02, r.coeffs.x11};
  const double ts[6] = {100, 2, 0.5, 3, 0.01, 0.1};
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(xs[k], ts[k], 1e-6 * std::abs(ts[k])) << k;
  EXPECT_LT(r.rms, 1e-6);
}

TEST(Fit, IndefiniteTargetProjectedToConvex) {
  const QuadCoeffs truth{5000, 300, 0.2, 20, 1e-4, 2.0};  // 4 x20 x02 = 0.008 < x11^2 = 4
  const auto s = grid_samples(truth, 3.0, 12.0, 20000.0);
  const auto r = fit(s);
  EXPECT_GE(4 * r.coeffs.x20 * r.coeffs.x02 - r.coeffs.x11 * r.coeffs.x11, -1e-9 * r.coeffs.x11 * r.coeffs.x11);
  EXPECT_GE(r.coeffs.x20, 0.0);
  EXPECT_GE(r.coeffs.x02, 0.0);
  EXPECT_GE(r.coeffs.hessian_min_eig(), -1e-9);
  const double got = sse(r.coeffs, s);
  EXPECT_GE(got, unconstrained_sse(s) * (1 - 1e-9));
  EXPECT_LE(got, boundary_scan_sse(s, 12.0, 20000.0) * (1 + 1e-6));
}

TEST(Fit, OptimalOnRandomIndefiniteTargets) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 6; ++trial) {
    // Non-polynomial targets so the fit has real residual.
    const double a = 1 + U(rng), b = 2 + U(rng), c = U(rng), d = 3 + U(rng);
    std::vector<PowerSample> s;
    for (int i = 0; i < 15; ++i)
      for (int j = 0; j < 15; ++j) {
        const double v = 1.0 + 9.0 * i / 14, F = 8000.0 * j / 14;
        s.push_back({v, F, 1000 * (a + b * v * F / 8000.0 * (1 + 0.1 * c * std::sin(v)) + d * std::sqrt(v))});
      }
    const auto r = fit(s);
    EXPECT_GE(r.coeffs.hessian_min_eig(), -1e-9);
    const double got = sse(r.coeffs, s);
    EXPECT_GE(got, unconstrained_sse(s) * (1 - 1e-9));
    EXPECT_LE(got, boundary_scan_sse(s, 10.0, 8000.0) * (1 + 1e-6)) << trial;
  }
}

TEST(Fit, ZeroTargetGivesZeroCoefficients) {
  auto s = grid_samples(QuadCoeffs{}, 0.0, 5.0, 1000.0, 5, 5);
  const auto r = fit(s);
  for (double x : {r.coeffs.x00, r.coeffs.x10, r.coeffs.x01, r.coeffs.x20, r.coeffs.x02, r.coeffs.x11}) EXPECT_EQ(x, 0.0);
}

TEST(Fit, RankDeficientNamesDirection) {
  // One speed only: v, v^2 and the constant cannot be separated.
  std::vector<PowerSample> s;
  for (int j = 0; j < 10; ++j) s.push_back({5.0, 100.0 * j, 10.0 * j});
  try {
    fit(s);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rank-deficient"), std::string::npos);
    EXPECT_TRUE(msg.find("x10") != std::string::npos || msg.find("x20") != std::string::npos) << msg;
  }
  EXPECT_THROW(fit({{1, 1, 1}, {2, 2, 2}}), DataError);
}

TEST(Fit, PermutationInvariant) {
  auto s = grid_samples(QuadCoeffs{5000, 300, 0.2, 20, 1e-4, 2.0}, 3.0, 12.0, 20000.0, 12, 12);
  for (auto& p : s) p.P *= 1.0 + 0.05 * std::sin(p.v * p.F);
  const auto a = fit(s);
  std::mt19937 rng(3);
  std::shuffle(s.begin(), s.end(), rng);
  const auto b = fit(s);
  EXPECT_NEAR(a.coeffs.x00, b.coeffs.x00, 1e-10 * std::abs(a.coeffs.x00));
  EXPECT_NEAR(a.coeffs.x11, b.coeffs.x11, 1e-10 * std::abs(a.coeffs.x11));
  EXPECT_NEAR(a.coeffs.x02, b.coeffs.x02, 1e-10 * std::abs(a.coeffs.x02));
}

TEST(Fit, ConvexAlongSegments) {
  const auto pt = Powertrain::from_config(Config::load(kData / "bus.toml"));
  const auto model = fit_powertrain(pt);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int g = 1; g <= 4; ++g) {
    const auto& gr = pt.schedule.gear(g);
    for (int k = 0; k < 200; ++k) {
      const double v1 = gr.v_low + U(rng) * (gr.v_high - gr.v_low), v2 = gr.v_low + U(rng) * (gr.v_high - gr.v_low);
      const double F1 = U(rng) * gr.F_t_max, F2 = U(rng) * gr.F_t_max;
      const double mid = model.eval(0.5 * (v1 + v2), 0.5 * (F1 + F2), g);
      EXPECT_LE(mid, 0.5 * (model.eval(v1, F1, g) + model.eval(v2, F2, g)) + 1e-9 * std::abs(mid));
    }
  }
}

TEST(FitPowertrain, QualityOnShippedMap) {
  const auto pt = Powertrain::from_config(Config::load(kData / "bus.toml"));
  const auto model = fit_powertrain(pt);
  ASSERT_EQ(model.gears.size(), 4u);
  for (const auto& g : model.gears) {
    EXPECT_GE(g.c.hessian_min_eig(), -1e-9) << g.gear;
    EXPECT_LE(g.fit_rms, 0.05 * pt.schedule.gear(g.gear).P_max) << g.gear;
    // Independent RMS over the same grid.
    const auto s = sample_gear(pt, g.gear);
    EXPECT_NEAR(std::sqrt(sse(g.c, s) / s.size()), g.fit_rms, 1e-9 * g.fit_rms);
  }
}

TEST(QuadPowerModelIo, CsvRoundTripAndConvexityCheck) {
  QuadPowerModel m;
  m.gears.push_back({1, {100, 2, 0.5, 3, 0.01, 0.1}, 12.5});
  m.gears.push_back({2, {1e5, -5e4, 2.2, 2e4, 1.69e-5, 1.15}, 8197.6});
  const auto path = std::filesystem::temp_directory_path() / "ecohmpc_fit_rt.csv";
  m.save_csv(path);
  const auto back = QuadPowerModel::load_csv(path);
  ASSERT_EQ(back.gears.size(), 2u);
  EXPECT_EQ(back.gear(2).c.x11, 1.15);
  EXPECT_EQ(back.gear(2).c.x02, 1.69e-5);
  EXPECT_EQ(back.gear(1).fit_rms, 12.5);
  EXPECT_THROW(back.gear(3), std::out_of_range);
  QuadPowerModel bad;
  bad.gears.push_back({1, {0, 0, 0, 1, 1, 5}, 0});
  bad.save_csv(path);
  EXPECT_THROW(QuadPowerModel::load_csv(path), DataError);
  std::filesystem::remove(path);
}
