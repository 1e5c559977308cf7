#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace ecohmpc {

class Config;

/// Gridded engine fuel map. mdot is stored row-major as mdot[iw * T_grid.size() + iT].
struct EngineMap {
  std::vector<double> w_grid;       ///< [rad/s], strictly ascending
  std::vector<double> T_grid;       ///< [N m], strictly ascending
  std::vector<double> mdot;         ///< [g/s], nonnegative
  std::vector<double> T_max_curve;  ///< full-load torque per w_grid entry [N m]
  double H_u = 42600.0;             ///< lower heating value [J/g]

  std::size_t nw() const { return w_grid.size(); }
  std::size_t nT() const { return T_grid.size(); }
  double at(std::size_t iw, std::size_t iT) const { return mdot[iw * nT() + iT]; }
  double& at(std::size_t iw, std::size_t iT) { return mdot[iw * nT() + iT]; }

  double w_max() const { return w_grid.back(); }
  double T_max() const;
  /// Full-load torque, linearly interpolated; clamps outside the grid.
  double T_max_at(double w) const;
  bool covers(double w, double T) const;
  /// Bilinear interpolation; throws std::out_of_range outside the grid.
  double mdot_at(double w, double T) const;

  /// Throws DataError on a structurally invalid map.
  void validate() const;

  /// Engine map CSV: the first row holds the w grid (rad/s) after a label
  /// cell, each following row starts with a torque (N m) followed by mdot
  /// values (g/s). An optional row labelled T_max_Nm gives the full-load curve;
  /// without it the top of the torque grid is used.
  static EngineMap load_csv(const std::filesystem::path& path, double H_u);
  void save_csv(const std::filesystem::path& path) const;
};

/// Ingestion cleanup: cumulative max of mdot along T at every w.
EngineMap monotonize(EngineMap map);

/// Torque grid times T_max_new / max(T_ref); speed grid divided by
/// max(w_ref) / w_max_new. The fuel table is carried over cell for cell.
EngineMap scale_map(const EngineMap& ref, double T_max_new, double w_max_new);

/// Multiplies every fuel-flow entry by `factor`.
EngineMap scale_fuel_flow(EngineMap map, double factor);

/// Elementwise T w / (mdot H_u), laid out like EngineMap::mdot.
std::vector<double> efficiency(const EngineMap& map);

/// F_t v / (eta_e eta_t) [W].
double traction_power(double F_t, double v, double eta_e, double eta_t);

struct Gear {
  double ratio = 1.0;
  double v_low = 0.0;   ///< [m/s]
  double v_high = 0.0;  ///< [m/s]
  double F_t_max = 0.0; ///< [N]
  double P_max = 0.0;   ///< [W], fuel-side power (includes 1/(eta_e eta_t))
};

struct GearSchedule {
  std::vector<Gear> gears;  ///< exactly 4 entries, bands ascending and contiguous
  double final_drive = 1.0;
  double wheel_radius = 0.5;
  double hysteresis = 1.0;  ///< downshift happens h_v below the upshift speed [m/s]

  double v_covered() const { return gears.back().v_high; }
  const Gear& gear(int index) const { return gears.at(static_cast<std::size_t>(index - 1)); }
  void validate() const;
};

/// Stateless lookup: lowest gear whose band contains v (boundaries belong to
/// the lower gear). Speeds beyond the covered range return the top gear.
int select_gear(double v, const GearSchedule& sched);

/// Gear choice with hysteresis: upshift when v exceeds the band's top,
/// downshift once v drops h_v below the lower gear's top.
class GearSelector {
 public:
  explicit GearSelector(const GearSchedule& sched) : sched_(&sched) {}
  int update(double v);
  std::optional<int> current() const { return current_; }
  void reset() { current_.reset(); }

 private:
  const GearSchedule* sched_;
  std::optional<int> current_;
};

/// Scaled bus engine together with its driveline.
struct Powertrain {
  EngineMap map;
  GearSchedule schedule;
  double eta_t = 0.92;
  double w_idle = 62.83;  ///< [rad/s]

  /// Engine speed in a gear; the converter slips below idle.
  double engine_speed(double v, int gear) const;
  double engine_torque(double F_t, int gear) const;
  /// Largest traction the map allows at this speed in this gear [N].
  double traction_limit(double v, int gear) const;
  double idle_flow() const;  ///< mdot at (w_idle, T = 0) [g/s]

  /// Fuel-side power of the operating point [W]. Equal to F_t v / (eta_e eta_t)
  /// when the driveline does not slip; continuous at F_t = 0.
  double power_map(double v, double F_t, int gear) const;

  /// Plant fuel flow [g/s]. Zero with the engine off, idle flow when on with
  /// zero traction. Throws std::out_of_range for points outside the map.
  double fuel_flow(double v, double F_t, int gear, bool engine_on) const;

  /// Band maxima of map-feasible traction and power, evaluated on a fixed grid.
  std::pair<double, double> band_limits(int gear) const;
  /// Per-gear limits recomputed from the map; returns the largest relative
  /// mismatch against the stored schedule.
  double limits_mismatch() const;

  static Powertrain from_config(const Config& cfg);
};

/// Plant fuel flow; see Powertrain::fuel_flow.
double fuel_flow(double v, double F_t, int gear, const Powertrain& pt, bool engine_on);

/// Offline band search: among boundaries on a grid of `step` m/s, pick the split
/// with the highest speed-averaged mean map efficiency. Returns the three
/// upshift speeds. Gears must be listed low to high.
std::array<double, 3> choose_gear_bands(const Powertrain& pt, double v_top, double step);

}  // namespace ecohmpc
