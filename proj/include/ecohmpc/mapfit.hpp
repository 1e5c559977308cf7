#pragma once

#include <filesystem>
#include <vector>

namespace ecohmpc {

struct Powertrain;
struct GearSchedule;

/// f_app(v, F) = x00 + x10 v + x01 F + x20 v^2 + x02 F^2 + x11 v F  [W]
struct QuadCoeffs {
  double x00 = 0.0, x10 = 0.0, x01 = 0.0, x20 = 0.0, x02 = 0.0, x11 = 0.0;

  double operator()(double v, double F) const {
    return x00 + x10 * v + x01 * F + x20 * v * v + x02 * F * F + x11 * v * F;
  }
  /// Smallest eigenvalue of the Hessian [[2 x20, x11], [x11, 2 x02]].
  double hessian_min_eig() const;
};

struct PowerSample {
  double v = 0.0;  ///< [m/s]
  double F = 0.0;  ///< [N]
  double P = 0.0;  ///< [W]
};

struct FitResult {
  QuadCoeffs coeffs;
  double rms = 0.0;          ///< [W]
  int iterations = 0;
  bool used_fallback = false;
};

/// Least squares over the six coefficients subject to a convex quadratic part
/// (x20 >= 0, x02 >= 0, 4 x20 x02 >= x11^2). The quadratic part is written as
/// L L^T and the factor is solved by Levenberg-Marquardt from the projected
/// unconstrained solution. Samples are sorted first, so the result does not
/// depend on their order. Throws DataError for fewer than six samples or a
/// rank-deficient design.
FitResult fit(std::vector<PowerSample> samples);

/// R x S uniform grid over the gear's speed band times [0, F_t_max], valued
/// with the fuel-side power map.
std::vector<PowerSample> sample_gear(const Powertrain& pt, int gear, int R = 30, int S = 30);

struct GearFit {
  int gear = 0;
  QuadCoeffs c;
  double fit_rms = 0.0;
  double v_lo = 0.0, v_hi = 0.0;  ///< validity range; zero width when unknown
  double F_lo = 0.0, F_hi = 0.0;
};

/// Per-gear convex quadratic power surrogates.
class QuadPowerModel {
 public:
  std::vector<GearFit> gears;

  const GearFit& gear(int index) const;
  /// Polynomial value; logs a debug warning outside the validity range.
  double eval(double v, double F, int gear) const;
  /// Copies speed bands and traction ranges from the schedule.
  void attach_ranges(const GearSchedule& sched);

  /// CSV: gear, x00, x10, x01, x20, x02, x11, fit_rms
  void save_csv(const std::filesystem::path& path) const;
  static QuadPowerModel load_csv(const std::filesystem::path& path);
};

QuadPowerModel fit_powertrain(const Powertrain& pt, int R = 30, int S = 30);

}  // namespace ecohmpc
