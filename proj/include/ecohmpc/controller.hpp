#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ecohmpc/mapfit.hpp"
#include "ecohmpc/solver.hpp"
#include "ecohmpc/vehicle.hpp"

namespace ecohmpc {

class Config;

struct ControllerConfig {
  int N = 8;
  double dt = 0.2;  ///< [s]
  /// zeta1: F_b^2, zeta2: eps1^2 (switching), zeta3: eps2^2 (jerk band),
  /// zeta4: eps3^2 (desired gap), zeta5: eps4^2 (stop line), zeta6: (v - v_ref)^2
  std::array<double, 6> zeta{1e-6, 1.6e4, 1e-3, 2500.0, 2000.0, 1e5};
  double dF_t_max = 2000.0;     ///< [N] per step
  double d_m = 3.0;             ///< stop-line margin [m]
  double sensor_range = 100.0;  ///< [m]
  bool warm_start = true;
  double a_comf = 1.5;          ///< comfortable deceleration for stop activation [m/s^2]
  double a_term = 2.0;          ///< terminal braking capability v_N^2 <= 2 a_term d_ITS,N [m/s^2]
  /// With a visible lead, require at step N that braking at a_term to the
  /// predicted lead speed keeps the safe gap.
  bool terminal_gap = true;
  double stop_margin = 15.0;    ///< extra distance before the braking distance [m]
  double emergency_weight = 1e6;
  double v_hold = 0.5;          ///< standstill hold allowed below this predicted speed [m/s]
  int node_limit = 10000;
  double time_limit_ms = 150.0;

  void validate() const;
  /// Keys "controller.*"; the six weights are mandatory.
  static ControllerConfig from_config(const Config& cfg);
};

enum class ControllerKind { hmpc, baseline };
const char* to_string(ControllerKind k);

enum class Mode { following, greenwave, stopping };
const char* to_string(Mode m);

/// Current plant-side state seen by the controller.
struct MpcState {
  double v_h = 0.0;
  double d_rel = 0.0;
  double d_ITS = 0.0;
  int n_prev = 1;
  double s_host = 0.0;
  double F_t_prev = 0.0;  ///< traction applied in the last step [N]
};

/// Per-gear limits used inside one horizon.
struct GearLimits {
  int gear = 1;
  double F_t_max = 0.0;
  double P_max = 0.0;
  QuadCoeffs f_app;
};

/// Everything time-varying the builders need besides the state.
struct HorizonInputs {
  std::vector<double> v_lead;  ///< N+1 lead speeds
  bool lead_visible = true;    ///< impose the headway constraints
  std::vector<double> theta;   ///< N grades
  std::vector<double> v_min;   ///< N+1 speed bounds; index 0 unused
  std::vector<double> v_max;
  Mode mode = Mode::following;
  double v_ref = 0.0;
  bool stop_active = false;          ///< a stop line (red signal or bus stop) is tracked by d_ITS
  std::vector<bool> stop_at;         ///< N+1 flags: d_ITS,k >= 0 imposed at step k
  bool terminal_braking = false;     ///< add v_N^2 <= 2 a_term d_ITS,N
  std::vector<bool> hold;            ///< N flags: standstill hold force allowed in step k
  bool emergency = false;            ///< soften the safe-distance rows
};

/// Variable indices of one built problem; -1 when a block is absent.
struct Layout {
  int N = 0;
  std::vector<int> P, Ft, Fb, Fh, n, e1, e2, e3, e4, eE;  // per step k = 0..N-1
  std::vector<int> v, d, D;                              // states k = 0..N
};

struct BuiltProblem {
  Problem problem;
  Layout layout;
  ControllerKind kind = ControllerKind::hmpc;
};

/// Discrete state matrices of x = [v_h, d_rel, d_ITS] with inputs [F_t, F_b]:
/// x+ = A x + B u + w. d_rel advances by the trapezoidal relative distance and
/// d_ITS by the trapezoidal host distance.
struct StateMatrices {
  std::array<std::array<double, 3>, 3> A{};
  std::array<std::array<double, 2>, 3> B{};
  std::array<double, 3> w{};
};
StateMatrices state_matrices(const VehicleParams& p, double dt, double theta, double v_p, double v_p_next);

BuiltProblem build_following(const MpcState& st, const HorizonInputs& in, const GearLimits& gl,
                             const ControllerConfig& cfg, const VehicleParams& vp);
BuiltProblem build_urban(const MpcState& st, const HorizonInputs& in, const GearLimits& gl,
                         const ControllerConfig& cfg, const VehicleParams& vp);
/// Convex QCQP without the engine bit: f_app replaces P_ICE in the cost and the
/// traction bound does not depend on n.
BuiltProblem build_baseline(const MpcState& st, const HorizonInputs& in, const GearLimits& gl,
                            const ControllerConfig& cfg, const VehicleParams& vp);

struct MpcSolution {
  std::vector<double> P_ICE, F_t, F_b, F_h, n, eps1, eps2, eps3, eps4;  // N entries
  std::vector<double> v_h, d_rel, d_ITS;                                // N+1 entries
  double objective = 0.0;
  SolveStatus status = SolveStatus::numerical_failure;
};

MpcSolution extract(const BuiltProblem& bp, const std::vector<double>& x);
/// Binary pattern of a solution in Problem::binaries order.
std::vector<double> binaries_of(const BuiltProblem& bp, const std::vector<double>& x);

/// Result of one controller step.
struct MpcStep {
  MpcSolution plan;
  double F_t = 0.0, F_b = 0.0, P_ICE = 0.0;
  int n = 1;
  bool fallback = false;  ///< previous plan applied
  bool emergency = false;
  std::string event;
  SolveReport report;
};

/// Receding-horizon controller owning the warm start and the previous plan.
class MpcSession {
 public:
  MpcSession(ControllerKind kind, ControllerConfig cfg, VehicleParams vp);

  MpcStep step(const MpcState& st, HorizonInputs in, const GearLimits& gl);
  /// Problem of the most recent step, for dumps and oracle tests.
  const std::optional<BuiltProblem>& last_problem() const { return last_; }
  ControllerKind kind() const { return kind_; }
  const ControllerConfig& config() const { return cfg_; }

 private:
  BuiltProblem build(const MpcState& st, const HorizonInputs& in, const GearLimits& gl) const;

  ControllerKind kind_;
  ControllerConfig cfg_;
  VehicleParams vp_;
  std::optional<MpcSolution> prev_;
  int prev_age_ = 0;  ///< steps since prev_ was solved
  std::optional<BuiltProblem> last_;
};

}  // namespace ecohmpc
