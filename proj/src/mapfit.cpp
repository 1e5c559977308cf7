#include "ecohmpc/mapfit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>

#include "ecohmpc/csv.hpp"
#include "ecohmpc/error.hpp"
#include "ecohmpc/log.hpp"
#include "ecohmpc/powertrain.hpp"

namespace ecohmpc {
namespace {

constexpr const char* kNames[6] = {"x00", "x10", "x01", "x20", "x02", "x11"};

using Vec6 = Eigen::Matrix<double, 6, 1>;

// Problem in centred, normalized units: u = (v - vc)/vh, w = (F - Fc)/Fh,
// y = P/Ps. The shift leaves the Hessian condition intact up to scaling and
// keeps the design well conditioned on narrow gear bands.
struct Scaled {
  Eigen::MatrixXd X;  // n x 6 design, columns 1, u, w, u^2, w^2, uw
  Eigen::VectorXd y;
  double vc = 0.0, vh = 1.0, Fc = 0.0, Fh = 1.0, Ps = 1.0;
};

Scaled normalize(const std::vector<PowerSample>& s) {
  Scaled out;
  double v_lo = s.front().v, v_hi = v_lo, F_lo = s.front().F, F_hi = F_lo, P_abs = 0.0;
  for (const auto& p : s) {
    v_lo = std::min(v_lo, p.v);
    v_hi = std::max(v_hi, p.v);
    F_lo = std::min(F_lo, p.F);
    F_hi = std::max(F_hi, p.F);
    P_abs = std::max(P_abs, std::abs(p.P));
  }
  out.vc = 0.5 * (v_lo + v_hi);
  out.Fc = 0.5 * (F_lo + F_hi);
  if (v_hi > v_lo) out.vh = 0.5 * (v_hi - v_lo);
  if (F_hi > F_lo) out.Fh = 0.5 * (F_hi - F_lo);
  if (P_abs > 0.0) out.Ps = P_abs;
  const auto n = static_cast<Eigen::Index>(s.size());
  out.X.resize(n, 6);
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = s[static_cast<std::size_t>(i)];
    const double u = (p.v - out.vc) / out.vh;
    const double w = (p.F - out.Fc) / out.Fh;
    out.X.row(i) << 1.0, u, w, u * u, w * w, u * w;
    out.y(i) = p.P / out.Ps;
  }
  return out;
}

QuadCoeffs unscale(const Vec6& y, const Scaled& sc) {
  const double a = sc.vc / sc.vh, b = sc.Fc / sc.Fh;
  QuadCoeffs c;
  c.x20 = sc.Ps * y(3) / (sc.vh * sc.vh);
  c.x02 = sc.Ps * y(4) / (sc.Fh * sc.Fh);
  c.x11 = sc.Ps * y(5) / (sc.vh * sc.Fh);
  c.x10 = sc.Ps * (y(1) - 2.0 * y(3) * a - y(5) * b) / sc.vh;
  c.x01 = sc.Ps * (y(2) - 2.0 * y(4) * b - y(5) * a) / sc.Fh;
  c.x00 = sc.Ps * (y(0) - y(1) * a - y(2) * b + y(3) * a * a + y(4) * b * b + y(5) * a * b);
  return c;
}

bool convex(const Vec6& z) { return z(3) >= 0.0 && z(4) >= 0.0 && 4.0 * z(3) * z(4) >= z(5) * z(5); }

// Nearest PSD matrix to [[x20, x11/2], [x11/2, x02]], returned as coefficients.
Vec6 project_psd(Vec6 z) {
  Eigen::Matrix2d M;
  M << z(3), 0.5 * z(5), 0.5 * z(5), z(4);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(M);
  const Eigen::Vector2d lam = es.eigenvalues().cwiseMax(0.0);
  const Eigen::Matrix2d P = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  z(3) = P(0, 0);
  z(4) = P(1, 1);
  z(5) = P(0, 1) + P(1, 0);
  return z;
}

// When the unconstrained optimum is not convex the constrained one lies on the
// PSD boundary, where the quadratic block is rank one: L = (a, b)^T, so
// x20 = a^2, x11 = 2ab, x02 = b^2. theta = (x00, x10, x01, a, b).
using Vec5 = Eigen::Matrix<double, 5, 1>;

Vec6 from_factor(const Vec5& t) {
  Vec6 z;
  z << t(0), t(1), t(2), t(3) * t(3), t(4) * t(4), 2.0 * t(3) * t(4);
  return z;
}

Vec5 to_factor(const Vec6& z_ls) {
  Eigen::Matrix2d M;
  M << z_ls(3), 0.5 * z_ls(5), 0.5 * z_ls(5), z_ls(4);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(M);
  const double lam = std::max(es.eigenvalues()(1), 1e-6);
  const Eigen::Vector2d u = std::sqrt(lam) * es.eigenvectors().col(1);
  Vec5 t;
  t << z_ls(0), z_ls(1), z_ls(2), u(0), u(1);
  return t;
}

double objective(const Scaled& sc, const Vec6& z) { return (sc.X * z - sc.y).squaredNorm(); }

struct LmOutcome {
  Vec6 z;
  int iterations = 0;
  bool converged = false;
};

LmOutcome levenberg_marquardt(const Scaled& sc, Vec5 t) {
  const auto& X = sc.X;
  const Eigen::Index n = X.rows();
  double lambda = 1e-3;
  Vec6 z = from_factor(t);
  double f = objective(sc, z);
  LmOutcome out;
  for (int it = 0; it < 200; ++it) {
    out.iterations = it + 1;
    Eigen::MatrixXd J(n, 5);
    J.leftCols<3>() = X.leftCols<3>();
    J.col(3) = 2.0 * t(3) * X.col(3) + 2.0 * t(4) * X.col(5);
    J.col(4) = 2.0 * t(4) * X.col(4) + 2.0 * t(3) * X.col(5);
    const Eigen::VectorXd r = X * z - sc.y;
    const Eigen::Matrix<double, 5, 5> JtJ = J.transpose() * J;
    const Vec5 g = J.transpose() * r;
    // Exact Hessian of the half squared residual: the factor enters
    // quadratically, so its second-order term is cheap and removes the linear
    // convergence Gauss-Newton shows on large-residual fits.
    Eigen::Matrix<double, 5, 5> H = JtJ;
    const double s_aa = 2.0 * r.dot(X.col(3)), s_bb = 2.0 * r.dot(X.col(4)), s_ab = 2.0 * r.dot(X.col(5));
    H(3, 3) += s_aa;
    H(4, 4) += s_bb;
    H(3, 4) += s_ab;
    H(4, 3) += s_ab;
    if (g.lpNorm<Eigen::Infinity>() <= 1e-10 * std::max(1.0, f)) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    for (int k = 0; k < 60 && !accepted; ++k) {
      Eigen::Matrix<double, 5, 5> A = H;
      A.diagonal() += lambda * (JtJ.diagonal().array() + 1e-12).matrix();
      const Eigen::LLT<Eigen::Matrix<double, 5, 5>> llt(A);
      if (llt.info() != Eigen::Success) {
        lambda *= 4.0;
        continue;
      }
      const Vec5 t_new = t + llt.solve(-g);
      const Vec6 z_new = from_factor(t_new);
      const double f_new = objective(sc, z_new);
      if (f_new <= f) {
        if (f - f_new <= 1e-14 * f) out.converged = true;
        t = t_new;
        z = z_new;
        f = f_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
      } else {
        lambda *= 4.0;
      }
    }
    if (out.converged) break;
    if (!accepted) {
      // No descent left at machine precision: stationary unless the gradient is large.
      out.converged = g.lpNorm<Eigen::Infinity>() <= 1e-8 * std::max(1.0, f);
      break;
    }
  }
  out.z = z;
  return out;
}

// Projected alternating minimization: exact LS for the affine coefficients,
// then a projected gradient step on the quadratic block.
Vec6 alternating(const Scaled& sc, Vec6 z) {
  const auto& X = sc.X;
  const Eigen::MatrixXd Xa = X.leftCols<3>();
  const Eigen::MatrixXd Xq = X.rightCols<3>();
  const double L = (Xq.transpose() * Xq).eigenvalues().real().maxCoeff();
  const auto qr = Xa.colPivHouseholderQr();
  for (int it = 0; it < 20000; ++it) {
    z.head<3>() = qr.solve(sc.y - Xq * z.tail<3>());
    const Eigen::Vector3d g = Xq.transpose() * (X * z - sc.y);
    Vec6 trial = z;
    trial.tail<3>() -= g / L;
    z = project_psd(trial);
  }
  z.head<3>() = qr.solve(sc.y - Xq * z.tail<3>());
  return z;
}

std::string describe_direction(const Eigen::VectorXd& dir) {
  std::vector<std::pair<double, int>> parts;
  for (int k = 0; k < 6; ++k)
    if (std::abs(dir(k)) > 1e-3) parts.emplace_back(-std::abs(dir(k)), k);
  std::sort(parts.begin(), parts.end());
  std::ostringstream os;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const int k = parts[i].second;
    os << (i ? (dir(k) >= 0 ? " + " : " - ") : (dir(k) >= 0 ? "" : "-")) << std::abs(dir(k)) << "*" << kNames[k];
  }
  return os.str();
}

}  // namespace

double QuadCoeffs::hessian_min_eig() const {
  const double a = 2.0 * x20, d = 2.0 * x02;
  const double mean = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), x11);
  return mean - rad;
}

FitResult fit(std::vector<PowerSample> samples) {
  if (samples.size() < 6) throw DataError("fit needs at least 6 samples, got " + std::to_string(samples.size()));
  std::sort(samples.begin(), samples.end(), [](const PowerSample& l, const PowerSample& r) {
    return std::tie(l.v, l.F, l.P) < std::tie(r.v, r.F, r.P);
  });
  const Scaled sc = normalize(samples);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sc.X, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv(5) > 1e-10 * sv(0))) {
    std::string dirs;
    for (int k = 5; k >= 0 && !(sv(k) > 1e-10 * sv(0)); --k) {
      dirs += (dirs.empty() ? "" : "; ") + describe_direction(svd.matrixV().col(k));
    }
    throw DataError("rank-deficient sample set: coefficient direction(s) " + dirs + " not determined by the samples");
  }
  const Vec6 z_ls = sc.X.colPivHouseholderQr().solve(sc.y);

  FitResult res;
  Vec6 z = z_ls;
  if (!convex(z_ls)) {
    const LmOutcome lm = levenberg_marquardt(sc, to_factor(z_ls));
    z = lm.z;
    res.iterations = lm.iterations;
    if (!lm.converged) {
      const Vec6 z_alt = alternating(sc, project_psd(z_ls));
      if (objective(sc, z_alt) < objective(sc, z)) z = z_alt;
      res.used_fallback = true;
      log_info("mapfit: factor iteration stalled, used projected alternating minimization");
    }
  }
  res.coeffs = unscale(z, sc);
  double ss = 0.0;
  for (const auto& s : samples) ss += std::pow(res.coeffs(s.v, s.F) - s.P, 2);
  res.rms = std::sqrt(ss / static_cast<double>(samples.size()));
  return res;
}

std::vector<PowerSample> sample_gear(const Powertrain& pt, int gear, int R, int S) {
  if (R < 2 || S < 2) throw std::invalid_argument("sample grid needs at least 2x2 points");
  const auto& g = pt.schedule.gear(gear);
  std::vector<PowerSample> out;
  out.reserve(static_cast<std::size_t>(R * S));
  for (int i = 0; i < R; ++i) {
    const double v = g.v_low + (g.v_high - g.v_low) * i / (R - 1);
    for (int j = 0; j < S; ++j) {
      const double F = g.F_t_max * j / (S - 1);
      out.push_back({v, F, pt.power_map(v, F, gear)});
    }
  }
  return out;
}

const GearFit& QuadPowerModel::gear(int index) const {
  for (const auto& g : gears)
    if (g.gear == index) return g;
  throw std::out_of_range("no power model for gear " + std::to_string(index));
}

double QuadPowerModel::eval(double v, double F, int gear_index) const {
  const auto& g = gear(gear_index);
  if (g.v_hi > g.v_lo && (v < g.v_lo - 1e-9 || v > g.v_hi + 1e-9 || F < g.F_lo - 1e-9 || F > g.F_hi * (1 + 1e-9))) {
    log_debug("f_app extrapolated outside gear " + std::to_string(gear_index) + " range at v=" + format_double(v) +
              ", F=" + format_double(F));
  }
  return g.c(v, F);
}

void QuadPowerModel::attach_ranges(const GearSchedule& sched) {
  for (auto& g : gears) {
    const auto& gr = sched.gear(g.gear);
    g.v_lo = gr.v_low;
    g.v_hi = gr.v_high;
    g.F_lo = 0.0;
    g.F_hi = gr.F_t_max;
  }
}

void QuadPowerModel::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "gear,x00,x10,x01,x20,x02,x11,fit_rms\n";
  for (const auto& g : gears) {
    out << g.gear << ',' << format_double(g.c.x00) << ',' << format_double(g.c.x10) << ',' << format_double(g.c.x01)
        << ',' << format_double(g.c.x20) << ',' << format_double(g.c.x02) << ',' << format_double(g.c.x11) << ','
        << format_double(g.fit_rms) << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

QuadPowerModel QuadPowerModel::load_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  QuadPowerModel m;
  for (const auto& row : t.rows) {
    GearFit g;
    g.gear = static_cast<int>(row[t.column("gear")]);
    g.c.x00 = row[t.column("x00")];
    g.c.x10 = row[t.column("x10")];
    g.c.x01 = row[t.column("x01")];
    g.c.x20 = row[t.column("x20")];
    g.c.x02 = row[t.column("x02")];
    g.c.x11 = row[t.column("x11")];
    g.fit_rms = row[t.column("fit_rms")];
    if (g.c.hessian_min_eig() < -1e-9 * std::max({1.0, std::abs(g.c.x20), std::abs(g.c.x02)})) {
      throw DataError(path.string() + ": gear " + std::to_string(g.gear) + " surrogate is not convex");
    }
    m.gears.push_back(g);
  }
  if (m.gears.empty()) throw DataError(path.string() + ": no gear rows");
  return m;
}

QuadPowerModel fit_powertrain(const Powertrain& pt, int R, int S) {
  QuadPowerModel m;
  for (int g = 1; g <= static_cast<int>(pt.schedule.gears.size()); ++g) {
    const FitResult r = fit(sample_gear(pt, g, R, S));
    GearFit gf;
    gf.gear = g;
    gf.c = r.coeffs;
    gf.fit_rms = r.rms;
    m.gears.push_back(gf);
  }
  m.attach_ranges(pt.schedule);
  return m;
}

}  // namespace ecohmpc
