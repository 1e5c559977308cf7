#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ecohmpc {

/// One green window: green from g until the red start r (absolute seconds).
struct Phase {
  double g = 0.0;
  double r = 0.0;
};

/// Fixed-time signal. Green on [g_j, r_j), red everywhere else, including
/// before the first green and after the last red.
struct SignalSchedule {
  std::string id;
  double s = 0.0;  ///< stop-line position [m]
  std::vector<Phase> phases;

  void validate() const;
  bool is_red(double t) const;
  /// Phases whose red start lies after t, in time order.
  std::vector<Phase> upcoming(double t, std::size_t max_count) const;
};

struct BusStop {
  std::string id;
  double s = 0.0;       ///< stop position [m]
  double dwell = 10.0;  ///< s_t [s]
};

/// Signal timing and bus stops of one route.
struct Spat {
  std::vector<SignalSchedule> signals;
  std::vector<BusStop> stops;

  void validate() const;
  /// {"signals":[{"id","s_m","phases":[{"g_s","r_s"}]}],"stops":[{"id","s_m","dwell_s"}]}
  static Spat parse_json(const std::string& text, const std::string& origin);
  static Spat load_json(const std::filesystem::path& path);
};

struct SpeedInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Constant speeds whose arrival time d/v lands in [g, r], intersected with
/// [v_min, v_max]. With g <= 0 the green has started and the upper candidate
/// is unbounded. Throws std::invalid_argument for d <= 0 or g >= r.
std::optional<SpeedInterval> gwos_interval(double d, Phase phase, double v_min, double v_max);

enum class RefMode { greenwave, set_speed, stopping };
const char* to_string(RefMode m);

struct ReferenceSpeed {
  double v_ref = 0.0;
  RefMode mode = RefMode::set_speed;
  int signal = -1;             ///< index of the upcoming signal, if that is the next feature
  int stop = -1;               ///< index of the upcoming bus stop, if that is the next feature
  std::optional<Phase> target; ///< phase chosen for the green wave
};

struct GreenwaveOptions {
  std::size_t max_phases = 5;
  /// Seconds of slack kept before the red start when planning arrival.
  double arrival_margin = 0.0;
};

/// Next feature ahead of host_pos decides the mode. A pending (unserved) bus
/// stop means stopping; a signal yields the lower end of the first phase with
/// a non-empty interval, or the set speed when none of the scanned phases has
/// one. `stop_served[i]` marks stops whose dwell already completed.
ReferenceSpeed reference_speed(double host_pos, double now, const Spat& spat, const std::vector<bool>& stop_served,
                               double v_set, double v_min, double v_max, const GreenwaveOptions& opt = {});

}  // namespace ecohmpc
