#pragma once

#include <filesystem>
#include <vector>

namespace ecohmpc {

class Config;

/// Physical constants of the host bus and its headway policy.
struct VehicleParams {
  double m_v = 12000.0;    ///< vehicle mass [kg]
  double m_eq = 12600.0;   ///< equivalent mass incl. rotating parts [kg]
  double c_w = 0.7;        ///< drag coefficient [-]
  double A_f = 7.0;        ///< frontal area [m^2]
  double rho = 1.2;        ///< air density [kg/m^3]
  double c_r = 0.008;      ///< rolling resistance coefficient [-]
  double g = 9.81;         ///< gravitational acceleration [m/s^2]
  double p1 = 27.711;      ///< slope of the line fit to v^2 [m/s]
  double p2 = -168.459;    ///< offset of the line fit to v^2 [m^2/s^2]
  double d_min = 5.0;      ///< standstill safety gap [m]
  double h_s = 1.5;        ///< safety headway [s]
  double d_max = 15.0;     ///< desired-region offset [m]
  double h_c = 2.5;        ///< desired-region headway [s]
  double F_b_max = 50000;  ///< brake force limit [N]
  double eta_t = 0.92;     ///< transmission efficiency [-]

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  /// Half rho A c_w, the common factor of both aero models [kg/m].
  double aero_factor() const { return 0.5 * rho * A_f * c_w; }

  /// Reads keys "vehicle.*"; absent keys keep their defaults.
  static VehicleParams from_config(const Config& cfg);
};

enum class AeroMode { exact, linear };

/// Quadratic aerodynamic drag, used by the plant.
double aero_force_exact(double v, const VehicleParams& p);

/// Line-fit drag; affine in v and negative at low speed. Used by controller models.
double aero_force_linear(double v, const VehicleParams& p);

/// Aero + rolling + gradient resistance [N].
double resistance_force(double v, double theta, const VehicleParams& p, AeroMode mode);

/// Forward-Euler speed update of the controller model (linear aero). Not clamped.
double step_velocity(double v, double F_t, double F_b, double theta, double dt,
                     const VehicleParams& p);

double safe_distance(double v, const VehicleParams& p);
double desired_distance(double v, const VehicleParams& p);

struct RoadPoint {
  double s = 0.0;      ///< route position [m]
  double theta = 0.0;  ///< elevation angle [rad]
  double v_min = 0.0;  ///< [m/s]
  double v_max = 0.0;  ///< [m/s]
};

/// Route profile with linear interpolation of the grade and piecewise
/// (left-continuous) speed limits. Positions beyond the ends clamp.
class RouteProfile {
 public:
  RouteProfile() = default;
  explicit RouteProfile(std::vector<RoadPoint> points);

  /// CSV with columns s_m, theta_rad, v_min_mps, v_max_mps.
  static RouteProfile load_csv(const std::filesystem::path& path);
  /// Straight constant profile, convenient for tests.
  static RouteProfile flat(double length, double v_min, double v_max, double theta = 0.0);

  double theta_at(double s) const;
  double v_min_at(double s) const;
  double v_max_at(double s) const;
  double length() const { return points_.back().s; }
  const std::vector<RoadPoint>& points() const { return points_; }

 private:
  std::size_t segment(double s) const;
  std::vector<RoadPoint> points_;
};

}  // namespace ecohmpc
