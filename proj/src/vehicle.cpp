#include "ecohmpc/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ecohmpc/config.hpp"
#include "ecohmpc/csv.hpp"
#include "ecohmpc/error.hpp"

namespace ecohmpc {
namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(std::string("VehicleParams: ") + what);
}

void require_speed(double v) {
  if (!(v >= 0.0)) throw std::invalid_argument("speed must be nonnegative");
}

}  // namespace

void VehicleParams::validate() const {
  require(m_v > 0.0 && m_eq >= m_v, "need m_eq >= m_v > 0");
  require(c_w > 0.0 && A_f > 0.0 && rho > 0.0 && c_r > 0.0, "drag/rolling coefficients must be positive");
  require(eta_t > 0.0 && eta_t <= 1.0, "eta_t must lie in (0, 1]");
  require(g > 0.0, "g must be positive");
  require(d_min > 0.0 && h_s > 0.0, "d_min and h_s must be positive");
  require(d_max >= d_min && h_c >= 0.0, "need d_max >= d_min and h_c >= 0");
  require(F_b_max > 0.0, "F_b_max must be positive");
  // d_c(v) > d_s(v) for all v >= 0 needs the desired headway to dominate too.
  require(h_c >= h_s && d_max > d_min, "desired region must lie strictly beyond the safe gap");
}

VehicleParams VehicleParams::from_config(const Config& cfg) {
  VehicleParams p;
  auto num = [&](const char* key, double& field) { field = cfg.number_or(std::string("vehicle.") + key, field); };
  num("m_v", p.m_v);
  num("m_eq", p.m_eq);
  num("c_w", p.c_w);
  num("A_f", p.A_f);
  num("rho", p.rho);
  num("c_r", p.c_r);
  num("g", p.g);
  num("p1", p.p1);
  num("p2", p.p2);
  num("d_min", p.d_min);
  num("h_s", p.h_s);
  num("d_max", p.d_max);
  num("h_c", p.h_c);
  num("F_b_max", p.F_b_max);
  num("eta_t", p.eta_t);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  return p;
}

double aero_force_exact(double v, const VehicleParams& p) {
  require_speed(v);
  return p.aero_factor() * v * v;
}

double aero_force_linear(double v, const VehicleParams& p) {
  require_speed(v);
  return p.aero_factor() * (p.p1 * v + p.p2);
}

double resistance_force(double v, double theta, const VehicleParams& p, AeroMode mode) {
  const double aero = mode == AeroMode::exact ? aero_force_exact(v, p) : aero_force_linear(v, p);
  return aero + p.c_r * p.m_v * p.g * std::cos(theta) + p.m_v * p.g * std::sin(theta);
}

double step_velocity(double v, double F_t, double F_b, double theta, double dt,
                     const VehicleParams& p) {
  if (!(dt >= 0.0) || !(F_t >= 0.0) || !(F_b >= 0.0)) {
    throw std::invalid_argument("step_velocity: dt, F_t and F_b must be nonnegative");
  }
  return v + dt / p.m_eq * (F_t - F_b - resistance_force(v, theta, p, AeroMode::linear));
}

double safe_distance(double v, const VehicleParams& p) {
  require_speed(v);
  return p.d_min + p.h_s * v;
}

double desired_distance(double v, const VehicleParams& p) {
  require_speed(v);
  return p.d_max + p.h_c * v;
}

RouteProfile::RouteProfile(std::vector<RoadPoint> points) : points_(std::move(points)) {
  if (points_.empty()) throw DataError("route profile has no points");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& pt = points_[i];
    if (i > 0 && !(pt.s > points_[i - 1].s)) throw DataError("route positions must be strictly ascending");
    if (!(pt.v_min >= 0.0 && pt.v_min < pt.v_max)) throw DataError("route needs 0 <= v_min < v_max");
    if (!(std::abs(pt.theta) < M_PI / 2)) throw DataError("route grade angle out of range");
  }
}

RouteProfile RouteProfile::load_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const auto s = t.column("s_m");
  const auto th = t.column("theta_rad");
  const auto lo = t.column("v_min_mps");
  const auto hi = t.column("v_max_mps");
  std::vector<RoadPoint> pts;
  for (const auto& r : t.rows) pts.push_back({r[s], r[th], r[lo], r[hi]});
  return RouteProfile(std::move(pts));
}

RouteProfile RouteProfile::flat(double length, double v_min, double v_max, double theta) {
  return RouteProfile({{0.0, theta, v_min, v_max}, {length, theta, v_min, v_max}});
}

std::size_t RouteProfile::segment(double s) const {
  auto it = std::upper_bound(points_.begin(), points_.end(), s,
                             [](double x, const RoadPoint& p) { return x < p.s; });
  if (it == points_.begin()) return 0;
  return static_cast<std::size_t>(it - points_.begin()) - 1;
}

double RouteProfile::theta_at(double s) const {
  if (points_.size() == 1 || s <= points_.front().s) return points_.front().theta;
  if (s >= points_.back().s) return points_.back().theta;
  const std::size_t i = segment(s);
  const auto& a = points_[i];
  const auto& b = points_[i + 1];
  const double w = (s - a.s) / (b.s - a.s);
  return a.theta + w * (b.theta - a.theta);
}

double RouteProfile::v_min_at(double s) const { return points_[segment(s)].v_min; }
double RouteProfile::v_max_at(double s) const { return points_[segment(s)].v_max; }

}  // namespace ecohmpc
