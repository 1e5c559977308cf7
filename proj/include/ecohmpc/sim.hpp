#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ecohmpc/controller.hpp"
#include "ecohmpc/greenwave.hpp"
#include "ecohmpc/mapfit.hpp"
#include "ecohmpc/powertrain.hpp"
#include "ecohmpc/predictor.hpp"
#include "ecohmpc/vehicle.hpp"

namespace ecohmpc {

class Config;

enum class PredictorKind { frozen, prescient };
const char* to_string(PredictorKind k);
PredictorKind parse_predictor(const std::string& s);
ControllerKind parse_controller(const std::string& s);

struct SimSettings {
  double duration = 600.0;      ///< [s]
  double v_set = 13.9;          ///< cruise speed without a green-wave target [m/s]
  double v_floor = 5.0;         ///< lowest green-wave reference [m/s]
  double arrival_margin = 4.0;  ///< slack before the red start when planning a green wave [s]
  double amber = 3.0;           ///< the baseline sees a signal turn red this early [s]
  double a_dilemma = 3.0;       ///< deceleration beyond which the baseline drives through amber [m/s^2]
  double stop_speed = 0.1;      ///< dwell counts below this speed [m/s]
  double gap_margin = 0.5;      ///< extra standstill gap in the controller model [m]
  double band_margin = 6.0;     ///< the controller aims this far inside the desired gap [m]
  double go_margin = 0.5;       ///< a green crossing must be predicted this long before red [s]
  double signal_stop_range = 60.0; ///< a standstill this close to a signal counts as stopping at it [m]
  double stop_zone = 10.0;      ///< the stop-line slack is used this close beyond d_m [m]
  double stop_range = 300.0;    ///< the stop line is tracked within this distance [m]
  bool log_wall_time = false;   ///< write measured solve times into the trajectory CSV
};

/// Everything a closed-loop run needs, loaded from one scenario file.
struct RouteScenario {
  std::string name;
  RouteProfile route;
  Spat spat;
  std::optional<LeadTrace> lead;
  double lead_gap0 = 30.0;  ///< initial bumper gap [m]
  double v0 = 0.0;          ///< initial host speed [m/s]
  VehicleParams vehicle;
  Powertrain powertrain;
  QuadPowerModel power_model;
  ControllerConfig controller;
  SimSettings sim;
  std::string hash;  ///< FNV-1a over every file the scenario reads

  void validate() const;
  /// Scenario config: keys under [scenario] and [sim] plus the vehicle,
  /// powertrain, gears and controller sections (usually via include).
  static RouteScenario load(const std::filesystem::path& path);
};

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 14695981039346656037ull);

struct LogRow {
  double t = 0.0, s_host = 0.0, v_h = 0.0, v_p = 0.0, d_rel = 0.0, d_ITS = 0.0;
  double F_t = 0.0, F_b = 0.0;
  int n = 1, gear = 1;
  double P_ICE = 0.0;      ///< fuel-side engine power of the plant [W]
  double fuel_rate = 0.0;  ///< [g/s]
  double fuel_cum = 0.0;   ///< [g] burned before the step
  Mode mode = Mode::following;
  double solve_ms = 0.0;
  double F_t_cmd = 0.0;  ///< controller output before actuator saturation; not in the CSV
  double P_cmd = 0.0;    ///< controller's P_ICE; not in the CSV
};

struct SimEvent {
  double t = 0.0;
  std::string what;
};

struct StopVisit {
  std::string id;
  double dwell = 0.0;         ///< time spent below stop_speed within d_m [s]
  double stop_offset = 0.0;   ///< distance to the stop position when standing [m]
  bool served = false;
};

struct TrajectoryLog {
  std::string scenario;
  std::string scenario_hash;
  ControllerKind controller = ControllerKind::hmpc;
  PredictorKind predictor = PredictorKind::frozen;
  int N = 0;
  double dt = 0.2;
  std::vector<LogRow> rows;
  std::vector<SimEvent> events;
  std::vector<StopVisit> stops;
  int emergencies = 0;
  int red_violations = 0;
  int fallbacks = 0;
  std::vector<double> solve_ms;  ///< measured, never written to the CSV unless asked

  /// Column order: t, s_host, v_h, v_p, d_rel, d_ITS, F_t, F_b, n, gear,
  /// P_ICE, fuel_rate, fuel_cum, mode, solve_ms.
  std::string to_csv(bool wall_time) const;
};

/// Whether the host came to a standstill while approaching a signal.
struct SignalVisit {
  std::string id;
  bool stopped = false;
};

/// Closed loop of controller, exact plant and scenario events. Throws
/// SimulationAbort when the host hits the lead vehicle.
TrajectoryLog run(const RouteScenario& scn, ControllerKind kind, PredictorKind predictor);

/// Fuel the bus would burn replaying the lead trace over the run's duration
/// with the engine always on [g].
double lead_replay_fuel(const RouteScenario& scn);

struct Summary {
  std::string scenario_hash;
  std::string controller, predictor;
  int N = 0;
  double distance_km = 0.0;
  double trip_time_s = 0.0;
  double fuel_g = 0.0;
  double fuel_L = 0.0;
  double mean_solve_ms = 0.0;
  double p95_solve_ms = 0.0;
  double engine_off_fraction = 0.0;
  int stops = 0;          ///< standstill events away from bus stops
  int emergencies = 0;
  int red_violations = 0;
  int fallbacks = 0;
  std::optional<double> saving_pct;  ///< against the baseline log, when given
  std::vector<SignalVisit> signals;
  std::vector<StopVisit> bus_stops;
  std::vector<SimEvent> events;

  std::string to_json() const;
};

/// Diesel density used for litres [kg/L].
inline constexpr double kDieselDensity = 0.835;

/// Totals of one log; with a baseline log the fuel saving
/// (fuel_b - fuel_h) / fuel_b in percent. Throws DataError when the scenario
/// hashes differ.
Summary report(const TrajectoryLog& log, const RouteScenario& scn, const TrajectoryLog* baseline = nullptr);

}  // namespace ecohmpc
