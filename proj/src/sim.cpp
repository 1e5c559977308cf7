#include "ecohmpc/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "ecohmpc/config.hpp"
#include "ecohmpc/csv.hpp"
#include "ecohmpc/error.hpp"
#include "ecohmpc/log.hpp"

namespace ecohmpc {

const char* to_string(PredictorKind k) { return k == PredictorKind::frozen ? "frozen" : "prescient"; }

PredictorKind parse_predictor(const std::string& s) {
  if (s == "frozen") return PredictorKind::frozen;
  if (s == "prescient") return PredictorKind::prescient;
  throw std::invalid_argument("unknown predictor '" + s + "' (frozen|prescient)");
}

ControllerKind parse_controller(const std::string& s) {
  if (s == "hmpc") return ControllerKind::hmpc;
  if (s == "baseline") return ControllerKind::baseline;
  throw std::invalid_argument("unknown controller '" + s + "' (hmpc|baseline)");
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void RouteScenario::validate() const {
  auto fail = [&](const std::string& m) { throw DataError("scenario " + name + ": " + m); };
  vehicle.validate();
  controller.validate();
  spat.validate();
  if (!(sim.duration > 0.0)) fail("duration must be positive");
  if (!(v0 >= 0.0)) fail("initial speed must be nonnegative");
  for (std::size_t i = 1; i < spat.signals.size(); ++i)
    if (!(spat.signals[i].s > spat.signals[i - 1].s)) fail("signals must be ordered by position");
  for (std::size_t i = 1; i < spat.stops.size(); ++i)
    if (!(spat.stops[i].s > spat.stops[i - 1].s)) fail("stops must be ordered by position");
  for (const auto& sg : spat.signals)
    for (const auto& st : spat.stops)
      if (std::abs(sg.s - st.s) < 2.0 * controller.d_m) fail("signal " + sg.id + " and stop " + st.id + " overlap");
  if (lead) {
    if (lead->empty()) fail("lead trace is empty");
    if (!(lead_gap0 >= safe_distance(v0, vehicle))) fail("initial gap is below the safe distance");
    // Beyond its last sample the trace holds its final speed.
    if (lead->t_end() < sim.duration) log_info("lead trace ends before the run; holding its last speed");
  }
  if (power_model.gears.size() != powertrain.schedule.gears.size()) fail("power fit does not cover every gear");
  if (!(sim.v_floor > 0.0) || !(sim.v_set > 0.0)) fail("v_floor and v_set must be positive");
  if (!(sim.stop_speed > 0.0) || !(sim.amber >= 0.0) || !(sim.a_dilemma > 0.0)) fail("bad stop or amber settings");
  if (sim.gap_margin < 0.0 || sim.band_margin < 0.0) fail("gap margins must be nonnegative");
  if (!(vehicle.d_max - sim.band_margin > vehicle.d_min + sim.gap_margin)) fail("gap margins leave no desired band");
  if (route.points().empty()) fail("route is empty");
}

RouteScenario RouteScenario::load(const std::filesystem::path& path) {
  try {
    const Config cfg = Config::load(path);
    RouteScenario s;
    std::vector<std::filesystem::path> files(cfg.sources().begin(), cfg.sources().end());
    s.name = cfg.string_or("scenario.name", path.stem().string());
    s.sim.duration = cfg.number("scenario.duration_s");
    if (cfg.has("scenario.route")) {
      files.push_back(cfg.path("scenario.route"));
      s.route = RouteProfile::load_csv(files.back());
    } else {
      s.route = RouteProfile::flat(cfg.number("scenario.route_length_m"), cfg.number_or("scenario.v_min_mps", 0.0),
                                   cfg.number("scenario.v_max_mps"), cfg.number_or("scenario.theta_rad", 0.0));
    }
    if (cfg.has("scenario.spat")) {
      files.push_back(cfg.path("scenario.spat"));
      s.spat = Spat::load_json(files.back());
    }
    if (cfg.has("scenario.lead")) {
      files.push_back(cfg.path("scenario.lead"));
      s.lead = LeadTrace::load_csv(files.back());
    } else if (cfg.has("scenario.lead_speed_mps")) {
      s.lead = LeadTrace::constant(cfg.number("scenario.lead_speed_mps"), s.sim.duration);
    }
    s.lead_gap0 = cfg.number_or("scenario.lead_gap_m", s.lead_gap0);
    s.v0 = cfg.number_or("scenario.host_v0_mps", 0.0);

    s.vehicle = VehicleParams::from_config(cfg);
    s.powertrain = Powertrain::from_config(cfg);
    files.push_back(cfg.path("powertrain.engine_map"));
    if (cfg.has("scenario.power_fit")) {
      files.push_back(cfg.path("scenario.power_fit"));
      s.power_model = QuadPowerModel::load_csv(files.back());
      s.power_model.attach_ranges(s.powertrain.schedule);
    } else {
      s.power_model = fit_powertrain(s.powertrain);
    }
    s.controller = ControllerConfig::from_config(cfg);

    SimSettings& m = s.sim;
    m.v_set = cfg.number_or("sim.v_set_mps", m.v_set);
    m.v_floor = cfg.number_or("sim.v_floor_mps", m.v_floor);
    m.arrival_margin = cfg.number_or("sim.arrival_margin_s", m.arrival_margin);
    m.amber = cfg.number_or("sim.amber_s", m.amber);
    m.a_dilemma = cfg.number_or("sim.a_dilemma", m.a_dilemma);
    m.stop_speed = cfg.number_or("sim.stop_speed_mps", m.stop_speed);
    m.gap_margin = cfg.number_or("sim.gap_margin_m", m.gap_margin);
    m.band_margin = cfg.number_or("sim.band_margin_m", m.band_margin);
    m.go_margin = cfg.number_or("sim.go_margin_s", m.go_margin);
    m.stop_range = cfg.number_or("sim.stop_range_m", m.stop_range);
    m.signal_stop_range = cfg.number_or("sim.signal_stop_range_m", m.signal_stop_range);
    m.log_wall_time = cfg.boolean_or("sim.log_wall_time", m.log_wall_time);

    std::uint64_t h = 14695981039346656037ull;
    for (const auto& f : files) h = fnv1a(read_text_file(f), h);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    s.hash = buf;
    s.validate();
    return s;
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string TrajectoryLog::to_csv(bool wall_time) const {
  std::ostringstream o;
  o << "t,s_host,v_h,v_p,d_rel,d_ITS,F_t,F_b,n,gear,P_ICE,fuel_rate,fuel_cum,mode,solve_ms\n";
  auto f = [](double x) { return format_double(x); };
  for (const auto& r : rows) {
    o << f(r.t) << ',' << f(r.s_host) << ',' << f(r.v_h) << ',' << f(r.v_p) << ',' << f(r.d_rel) << ',' << f(r.d_ITS)
      << ',' << f(r.F_t) << ',' << f(r.F_b) << ',' << r.n << ',' << r.gear << ',' << f(r.P_ICE) << ','
      << f(r.fuel_rate) << ',' << f(r.fuel_cum) << ',' << to_string(r.mode) << ',' << f(wall_time ? r.solve_ms : 0.0)
      << '\n';
  }
  return o.str();
}

namespace {

// Start of the red that follows time t (t itself green).
double red_start_after(const SignalSchedule& sg, double t) {
  for (const auto& p : sg.phases)
    if (t >= p.g && t < p.r) return p.r;
  return t;
}

// Time to cover d from speed v accelerating at 1 m/s^2 up to v_top.
double crossing_time(double d, double v, double v_top) {
  constexpr double a = 1.0;
  v = std::min(v, v_top);
  const double d_acc = (v_top * v_top - v * v) / (2.0 * a);
  if (d <= d_acc) return (std::sqrt(v * v + 2.0 * a * d) - v) / a;
  return (v_top - v) / a + (d - d_acc) / v_top;
}

struct Plant {
  double t = 0.0, s = 0.0, v = 0.0, s_lead = 0.0;
};

// Per-run arbitration state.
struct Arbiter {
  std::vector<bool> served;
  std::vector<double> dwell;
  std::vector<bool> engaged;       // stop line tracked for a bus stop
  std::vector<double> go_red;      // red start the host committed to beat, per signal
  std::vector<double> stop_red;    // red episode the host committed to stop for
  std::vector<bool> base_go;       // baseline drove through the current amber
};

}  // namespace

TrajectoryLog run(const RouteScenario& scn, ControllerKind kind, PredictorKind predictor) {
  scn.validate();
  const ControllerConfig& cfg = scn.controller;
  const SimSettings& sm = scn.sim;
  const VehicleParams& vp = scn.vehicle;
  const Powertrain& pt = scn.powertrain;
  const Spat& spat = scn.spat;
  const bool hybrid = kind == ControllerKind::hmpc;
  const int N = cfg.N;
  const auto Nz = static_cast<std::size_t>(N);
  const double dt = cfg.dt;

  VehicleParams cvp = vp;
  cvp.d_min += sm.gap_margin;
  cvp.d_max -= sm.band_margin;
  MpcSession ses(kind, cfg, cvp);
  GearSelector gears(pt.schedule);

  TrajectoryLog log;
  log.scenario = scn.name;
  log.scenario_hash = scn.hash;
  log.controller = kind;
  log.predictor = predictor;
  log.N = N;
  log.dt = dt;
  for (const auto& st : spat.stops) log.stops.push_back({st.id, 0.0, 0.0, false});

  Arbiter A;
  A.served.assign(spat.stops.size(), false);
  A.dwell.assign(spat.stops.size(), 0.0);
  A.engaged.assign(spat.stops.size(), false);
  A.go_red.assign(spat.signals.size(), -1.0);
  A.stop_red.assign(spat.signals.size(), -1.0);
  A.base_go.assign(spat.signals.size(), false);

  Plant x;
  x.v = scn.v0;
  x.s_lead = scn.lead_gap0;
  int n_prev = 1;
  double F_prev = 0.0;
  double fuel = 0.0;
  bool standing = x.v < sm.stop_speed;
  const auto steps = static_cast<long>(std::llround(sm.duration / dt));
  const double s_end = scn.route.length();
  auto event = [&](const std::string& what) { log.events.push_back({x.t, what}); };

  for (long i = 0; i < steps && x.s < s_end; ++i) {
    x.t = static_cast<double>(i) * dt;
    const int gear = gears.update(x.v);
    const Gear& gr = pt.schedule.gear(gear);
    const GearLimits gl{gear, gr.F_t_max, gr.P_max, scn.power_model.gear(gear).c};

    const double v_p = scn.lead ? scn.lead->at(x.t) : 0.0;
    const double d_rel = scn.lead ? x.s_lead - x.s : kInf;
    if (scn.lead && d_rel < safe_distance(x.v, vp) - 1e-9) {
      ++log.emergencies;
      event("gap below safe distance: " + format_double(d_rel) + " m");
    }

    HorizonInputs in;
    in.v_lead = !scn.lead                            ? std::vector<double>(Nz + 1, 0.0)
                : predictor == PredictorKind::frozen ? predict_frozen(v_p, N)
                                                     : predict_prescient(*scn.lead, x.t, N, dt);
    in.theta.resize(Nz);
    in.v_min.resize(Nz + 1);
    in.v_max.resize(Nz + 1);
    for (std::size_t k = 0; k <= Nz; ++k) {
      // Constant-speed position prediction for the route lookups.
      const double sk = x.s + x.v * dt * static_cast<double>(k);
      if (k < Nz) in.theta[k] = scn.route.theta_at(sk);
      in.v_min[k] = std::min(scn.route.v_min_at(sk), std::max(0.0, x.v - 3.0 * dt * static_cast<double>(k)));
      in.v_max[k] = std::max(scn.route.v_max_at(sk), x.v - 3.0 * dt * static_cast<double>(k));
    }
    const bool lead_in_range = scn.lead && d_rel <= cfg.sensor_range;
    in.lead_visible = lead_in_range;
    const double v_lim = scn.route.v_max_at(x.s);
    const double v_set = std::min(sm.v_set, v_lim);
    // Without a target the baseline follows a virtual vehicle at the set speed.
    const bool virtual_lead = !hybrid && !lead_in_range;
    if (virtual_lead) {
      in.lead_visible = true;
      in.v_lead.assign(Nz + 1, v_set);
    }
    const double brake_dist = x.v * x.v / (2.0 * cfg.a_comf) + cfg.stop_margin;

    // Next features.
    int sig = -1, stop = -1;
    for (std::size_t j = 0; j < spat.signals.size(); ++j)
      if (spat.signals[j].s > x.s) {
        sig = static_cast<int>(j);
        break;
      }
    for (std::size_t j = 0; j < spat.stops.size(); ++j)
      if (!A.served[j] && spat.stops[j].s >= x.s - cfg.d_m) {
        stop = static_cast<int>(j);
        break;
      }
    const bool stop_first = stop >= 0 && (sig < 0 || spat.stops[static_cast<std::size_t>(stop)].s <= spat.signals[static_cast<std::size_t>(sig)].s);

    double line = 0.0;
    bool line_active = false, go_fallback = false;
    std::vector<bool> stop_at(Nz + 1, false);
    bool terminal = false;
    Mode mode = Mode::following;
    double v_ref = v_set;
    bool want_stop_mode = false;

    if (stop_first) {
      const auto j = static_cast<std::size_t>(stop);
      line = spat.stops[j].s;
      if (!A.engaged[j] && line - x.s <= brake_dist) {
        A.engaged[j] = true;
        event("approach stop " + spat.stops[j].id);
      }
      if (A.engaged[j]) {
        line_active = true;
        std::fill(stop_at.begin() + 1, stop_at.end(), true);
        terminal = true;
        want_stop_mode = true;
      }
    } else if (sig >= 0 && spat.signals[static_cast<std::size_t>(sig)].s - x.s <= sm.stop_range) {
      const auto j = static_cast<std::size_t>(sig);
      const SignalSchedule& sg = spat.signals[j];
      line = sg.s;
      const double D = line - x.s;
      if (hybrid) {
        std::vector<bool> red(Nz + 1);
        for (std::size_t k = 0; k <= Nz; ++k) red[k] = sg.is_red(x.t + dt * static_cast<double>(k));
        if (red[0]) {
          // Hold back through the current red; the next green is free.
          for (std::size_t k = 0; k <= Nz && red[k]; ++k) stop_at[k] = k > 0;
          line_active = true;
          terminal = red[Nz];
          want_stop_mode = D <= brake_dist;
        } else {
          const double r = red_start_after(sg, x.t);
          const bool decided = D <= brake_dist;
          bool go = A.go_red[j] == r;
          if (!go && A.stop_red[j] != r) {
            go = x.t + crossing_time(D, x.v, v_set) < r - sm.go_margin;
            if (decided) (go ? A.go_red[j] : A.stop_red[j]) = r;
          }
          if (!go) {
            for (std::size_t k = 1; k <= Nz; ++k) stop_at[k] = red[k];
            line_active = true;
            terminal = true;
            want_stop_mode = decided;
          }
        }
      } else {
        // The baseline sees only the displayed aspect: red now or within the amber time.
        const bool shown_red = sg.is_red(x.t) || sg.is_red(x.t + sm.amber);
        if (!shown_red) {
          A.base_go[j] = false;
        } else if (!A.base_go[j]) {
          const bool onset = !sg.is_red(x.t - dt) && !sg.is_red(x.t - dt + sm.amber);
          if (onset && D < x.v * x.v / (2.0 * sm.a_dilemma)) {
            A.base_go[j] = true;
            event("amber: drive through " + sg.id);
          } else {
            line_active = true;
            std::fill(stop_at.begin() + 1, stop_at.end(), true);
            terminal = true;
            want_stop_mode = D <= brake_dist;
          }
        }
      }
    }

    // Mode and reference speed.
    const bool lead_blocks = lead_in_range && x.s_lead < line;
    const bool in_zone = line_active && line - x.s <= cfg.d_m + sm.stop_zone && !lead_blocks;
    if (hybrid) {
      const std::vector<bool> skip_stops(spat.stops.size(), true);
      GreenwaveOptions go;
      go.arrival_margin = sm.arrival_margin;
      const double v_lo = std::max(scn.route.v_min_at(x.s), sm.v_floor);
      ReferenceSpeed ref{v_set, RefMode::set_speed, -1, -1, std::nullopt};
      if (!stop_first && v_lo <= v_lim) ref = reference_speed(x.s, x.t, spat, skip_stops, v_set, v_lo, v_lim, go);
      const bool must_stop = want_stop_mode && (stop_first || ref.mode != RefMode::greenwave);
      if (must_stop) v_ref = std::min(v_set, std::sqrt(2.0 * cfg.a_comf * std::max(0.0, line - x.s - cfg.d_m)));
      else if (ref.mode == RefMode::greenwave || !stop_first) v_ref = ref.v_ref;
      if (must_stop && in_zone)
        mode = Mode::stopping;
      else if (lead_in_range && (in.v_lead[0] < v_ref || (!must_stop && ref.mode != RefMode::greenwave)))
        mode = Mode::following;
      else
        mode = Mode::greenwave;
    } else {
      mode = want_stop_mode && in_zone ? Mode::stopping : Mode::following;
    }

    in.mode = mode;
    in.v_ref = v_ref;
    in.stop_active = line_active;
    if (line_active) in.stop_at = stop_at;
    in.terminal_braking = line_active && terminal;

    MpcState st;
    st.v_h = x.v;
    st.d_rel = virtual_lead ? desired_distance(v_set, cvp) : lead_in_range ? d_rel : 0.0;
    st.d_ITS = line_active ? std::max(0.0, line - x.s) : 0.0;
    st.n_prev = n_prev;
    st.s_host = x.s;
    st.F_t_prev = F_prev;

    const auto t0 = std::chrono::steady_clock::now();
    MpcStep m = ses.step(st, in, gl);
    if (line_active && !stop_first && (m.report.status == SolveStatus::infeasible || m.event.find("full_brake") != std::string::npos)) {
      // Too late to stop for this red: commit to going.
      in.stop_active = false;
      in.stop_at.clear();
      in.terminal_braking = false;
      if (in.mode == Mode::stopping) in.mode = lead_in_range || !hybrid ? Mode::following : Mode::greenwave;
      if (sig >= 0) {
        const auto j = static_cast<std::size_t>(sig);
        if (hybrid)
          A.go_red[j] = red_start_after(spat.signals[j], x.t);
        else
          A.base_go[j] = true;
      }
      m = ses.step(st, in, gl);
      go_fallback = true;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log.solve_ms.push_back(ms);
    if (go_fallback) event("dilemma_go");
    if (m.fallback) ++log.fallbacks;
    if (m.emergency) ++log.emergencies;
    if (!m.event.empty()) event(m.event);

    // Plant: exact aero, saturated actuators, engine bit enforced.
    const int n = hybrid ? m.n : 1;
    double F_t = n == 1 ? std::clamp(m.F_t, 0.0, std::min(gr.F_t_max, pt.traction_limit(x.v, gear))) : 0.0;
    const double F_b = std::clamp(m.F_b, 0.0, vp.F_b_max);
    const double theta = scn.route.theta_at(x.s);
    const double a = (F_t - F_b - resistance_force(x.v, theta, vp, AeroMode::exact)) / vp.m_eq;
    const double v1 = std::max(0.0, x.v + a * dt);
    const double ds = 0.5 * dt * (x.v + v1);
    const double rate = n == 1 ? pt.fuel_flow(x.v, F_t, gear, true) : 0.0;

    LogRow row;
    row.t = x.t;
    row.s_host = x.s;
    row.v_h = x.v;
    row.v_p = v_p;
    row.d_rel = scn.lead ? d_rel : 0.0;
    if (stop_first)
      row.d_ITS = spat.stops[static_cast<std::size_t>(stop)].s - x.s;
    else if (sig >= 0)
      row.d_ITS = spat.signals[static_cast<std::size_t>(sig)].s - x.s;
    row.F_t = F_t;
    row.F_b = F_b;
    row.n = n;
    row.gear = gear;
    row.P_ICE = rate * pt.map.H_u;
    row.fuel_rate = rate;
    row.fuel_cum = fuel;  // burned before this step, like the state columns
    fuel += rate * dt;
    row.mode = mode;
    row.solve_ms = ms;
    row.F_t_cmd = m.F_t;
    row.P_cmd = m.P_ICE;
    log.rows.push_back(row);

    const double s_prev = x.s;
    x.s += ds;
    x.v = v1;
    if (scn.lead) x.s_lead += scn.lead->distance(x.t, x.t + dt);
    n_prev = n;
    F_prev = F_t;
    const double t1 = x.t + dt;

    for (std::size_t j = 0; j < spat.signals.size(); ++j) {
      const SignalSchedule& sg = spat.signals[j];
      if (s_prev < sg.s && x.s >= sg.s) {
        const double tc = x.t + dt * (sg.s - s_prev) / (x.s - s_prev);
        if (sg.is_red(tc)) {
          ++log.red_violations;
          log.events.push_back({tc, "red crossing at " + sg.id});
        }
      }
    }
    if (scn.lead && x.s_lead - x.s < 0.0) {
      throw SimulationAbort("collision with the lead vehicle at t = " + format_double(t1) + " s, s = " +
                            format_double(x.s) + " m (" + scn.name + ", " + to_string(kind) + ")");
    }

    const bool now_standing = x.v < sm.stop_speed;
    if (stop_first) {
      const auto j = static_cast<std::size_t>(stop);
      const double off = spat.stops[j].s - x.s;
      if (now_standing && std::abs(off) <= cfg.d_m) {
        A.dwell[j] += dt;
        log.stops[j].dwell = A.dwell[j];
        log.stops[j].stop_offset = off;
        if (A.dwell[j] >= spat.stops[j].dwell - 1e-9) {
          A.served[j] = true;
          log.stops[j].served = true;
          log.events.push_back({t1, "served stop " + spat.stops[j].id});
        }
      }
    }
    if (now_standing && !standing) {
      std::string where = "standstill";
      if (stop_first && std::abs(spat.stops[static_cast<std::size_t>(stop)].s - x.s) <= cfg.d_m)
        where = "standstill at stop " + spat.stops[static_cast<std::size_t>(stop)].id;
      else if (sig >= 0 && spat.signals[static_cast<std::size_t>(sig)].s - x.s <= sm.signal_stop_range)
        where = "standstill at signal " + spat.signals[static_cast<std::size_t>(sig)].id;
      log.events.push_back({t1, where});
    }
    standing = now_standing;
  }

  // Terminal state without inputs.
  LogRow last;
  last.t = log.rows.empty() ? 0.0 : log.rows.back().t + dt;
  last.s_host = x.s;
  last.v_h = x.v;
  last.v_p = scn.lead ? scn.lead->at(last.t) : 0.0;
  last.d_rel = scn.lead ? x.s_lead - x.s : 0.0;
  last.n = n_prev;
  last.gear = gears.current().value_or(1);
  last.fuel_cum = fuel;
  last.mode = log.rows.empty() ? Mode::following : log.rows.back().mode;
  log.rows.push_back(last);
  return log;
}

double lead_replay_fuel(const RouteScenario& scn) {
  if (!scn.lead) throw DataError("scenario has no lead trace");
  const VehicleParams& vp = scn.vehicle;
  const Powertrain& pt = scn.powertrain;
  const double dt = scn.controller.dt;
  GearSelector gears(pt.schedule);
  const auto steps = static_cast<long>(std::llround(scn.sim.duration / dt));
  double fuel = 0.0, s = 0.0;
  for (long i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double v = scn.lead->at(t), v1 = scn.lead->at(t + dt);
    const int gear = gears.update(v);
    // Traction that reproduces the trace under the plant update; brakes otherwise.
    const double F = vp.m_eq * (v1 - v) / dt + resistance_force(v, scn.route.theta_at(s), vp, AeroMode::exact);
    const double F_t = std::clamp(F, 0.0, std::min(pt.schedule.gear(gear).F_t_max, pt.traction_limit(v, gear)));
    fuel += pt.fuel_flow(v, F_t, gear, true) * dt;
    s += scn.lead->distance(t, t + dt);
  }
  return fuel;
}

std::string Summary::to_json() const {
  nlohmann::ordered_json j;
  j["scenario_hash"] = scenario_hash;
  j["controller"] = controller;
  j["predictor"] = predictor;
  j["N"] = N;
  j["distance_km"] = distance_km;
  j["trip_time_s"] = trip_time_s;
  j["fuel_g"] = fuel_g;
  j["fuel_L"] = fuel_L;
  j["mean_solve_ms"] = mean_solve_ms;
  j["p95_solve_ms"] = p95_solve_ms;
  j["engine_off_fraction"] = engine_off_fraction;
  j["stops"] = stops;
  j["emergencies"] = emergencies;
  j["red_violations"] = red_violations;
  j["fallbacks"] = fallbacks;
  if (saving_pct) j["saving_pct"] = *saving_pct;
  auto& sv = j["signals"] = nlohmann::ordered_json::array();
  for (const auto& s : signals) sv.push_back({{"id", s.id}, {"stopped", s.stopped}});
  auto& bs = j["bus_stops"] = nlohmann::ordered_json::array();
  for (const auto& s : bus_stops)
    bs.push_back({{"id", s.id}, {"dwell_s", s.dwell}, {"stop_offset_m", s.stop_offset}, {"served", s.served}});
  auto& ev = j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : events) ev.push_back({{"t", e.t}, {"what", e.what}});
  return j.dump(2) + "\n";
}

Summary report(const TrajectoryLog& log, const RouteScenario& scn, const TrajectoryLog* baseline) {
  if (log.rows.empty()) throw DataError("empty trajectory log");
  if (log.scenario_hash != scn.hash) throw DataError("log was produced from a different scenario");
  Summary s;
  s.scenario_hash = log.scenario_hash;
  s.controller = to_string(log.controller);
  s.predictor = to_string(log.predictor);
  s.N = log.N;
  double dist = 0.0;
  for (std::size_t i = 1; i < log.rows.size(); ++i)
    dist += 0.5 * (log.rows[i].t - log.rows[i - 1].t) * (log.rows[i].v_h + log.rows[i - 1].v_h);
  s.distance_km = dist / 1000.0;
  s.trip_time_s = log.rows.back().t - log.rows.front().t;
  s.fuel_g = log.rows.back().fuel_cum;
  s.fuel_L = s.fuel_g / 1000.0 / kDieselDensity;
  const std::size_t steps = log.rows.size() - 1;
  double off = 0.0;
  for (std::size_t i = 0; i < steps; ++i) off += 1.0 - log.rows[i].n;
  s.engine_off_fraction = steps ? off / static_cast<double>(steps) : 0.0;
  if (!log.solve_ms.empty()) {
    double sum = 0.0;
    for (double m : log.solve_ms) sum += m;
    s.mean_solve_ms = sum / static_cast<double>(log.solve_ms.size());
    std::vector<double> sorted = log.solve_ms;
    std::sort(sorted.begin(), sorted.end());
    s.p95_solve_ms = sorted[std::min(sorted.size() - 1, static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size()))) - 1)];
  }
  for (const auto& sg : scn.spat.signals) s.signals.push_back({sg.id, false});
  for (const auto& e : log.events) {
    if (e.what.rfind("standstill", 0) != 0) continue;
    if (e.what.rfind("standstill at stop", 0) == 0) continue;
    ++s.stops;
    const std::string tag = "standstill at signal ";
    if (e.what.rfind(tag, 0) == 0)
      for (auto& v : s.signals)
        if (v.id == e.what.substr(tag.size())) v.stopped = true;
  }
  s.bus_stops = log.stops;
  s.events = log.events;
  s.emergencies = log.emergencies;
  s.red_violations = log.red_violations;
  s.fallbacks = log.fallbacks;
  if (baseline) {
    if (baseline->scenario_hash != log.scenario_hash) throw DataError("scenario hashes of the two logs differ");
    if (baseline->rows.empty()) throw DataError("empty baseline log");
    const double fb = baseline->rows.back().fuel_cum;
    if (!(fb > 0.0)) throw DataError("baseline log burned no fuel");
    s.saving_pct = 100.0 * (fb - s.fuel_g) / fb;
  }
  return s;
}

}  // namespace ecohmpc
