#include "ecohmpc/powertrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ecohmpc/config.hpp"
#include "ecohmpc/csv.hpp"
#include "ecohmpc/error.hpp"
#include "ecohmpc/log.hpp"

namespace ecohmpc {
namespace {

constexpr double kRpmToRadps = 2.0 * std::numbers::pi / 60.0;

// Index i with grid[i] <= x <= grid[i+1]; x must lie inside the grid.
std::size_t bracket(const std::vector<double>& grid, double x) {
  auto it = std::upper_bound(grid.begin(), grid.end(), x);
  std::size_t i = it == grid.begin() ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
  return std::min(i, grid.size() - 2);
}

bool strictly_ascending(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

}  // namespace

double EngineMap::T_max() const { return *std::max_element(T_max_curve.begin(), T_max_curve.end()); }

double EngineMap::T_max_at(double w) const {
  if (w <= w_grid.front()) return T_max_curve.front();
  if (w >= w_grid.back()) return T_max_curve.back();
  const std::size_t i = bracket(w_grid, w);
  const double a = (w - w_grid[i]) / (w_grid[i + 1] - w_grid[i]);
  return T_max_curve[i] + a * (T_max_curve[i + 1] - T_max_curve[i]);
}

bool EngineMap::covers(double w, double T) const {
  const double tol = 1e-9;
  return w >= w_grid.front() * (1 - tol) && w <= w_grid.back() * (1 + tol) &&
         T >= T_grid.front() - tol && T <= T_grid.back() * (1 + tol);
}

double EngineMap::mdot_at(double w, double T) const {
  if (!covers(w, T)) {
    throw std::out_of_range("engine operating point outside map: w=" + format_double(w) +
                            " rad/s, T=" + format_double(T) + " N m");
  }
  w = std::clamp(w, w_grid.front(), w_grid.back());
  T = std::clamp(T, T_grid.front(), T_grid.back());
  const std::size_t i = bracket(w_grid, w);
  const std::size_t j = bracket(T_grid, T);
  const double a = (w - w_grid[i]) / (w_grid[i + 1] - w_grid[i]);
  const double b = (T - T_grid[j]) / (T_grid[j + 1] - T_grid[j]);
  return (1 - a) * (1 - b) * at(i, j) + a * (1 - b) * at(i + 1, j) + (1 - a) * b * at(i, j + 1) +
         a * b * at(i + 1, j + 1);
}

void EngineMap::validate() const {
  if (w_grid.size() < 2 || T_grid.size() < 2) throw DataError("engine map needs at least a 2x2 grid");
  if (!strictly_ascending(w_grid) || !strictly_ascending(T_grid)) {
    throw DataError("engine map grids must be strictly ascending");
  }
  if (mdot.size() != nw() * nT()) throw DataError("engine map body has wrong size");
  if (T_max_curve.size() != nw()) throw DataError("engine full-load curve has wrong size");
  for (double m : mdot)
    if (!(m >= 0.0)) throw DataError("engine map has negative or NaN fuel flow");
  for (double t : T_max_curve)
    if (!(t > 0.0) || t > T_grid.back() * (1 + 1e-12)) throw DataError("full-load torque outside torque grid");
  if (!(H_u > 0.0)) throw DataError("heating value must be positive");
}

EngineMap EngineMap::load_csv(const std::filesystem::path& path, double H_u) {
  const auto cells = read_csv_cells(path);
  const std::string origin = path.string();
  if (cells.size() < 3) throw DataError(origin + ": engine map needs a w row and two torque rows");
  EngineMap map;
  map.H_u = H_u;
  for (std::size_t c = 1; c < cells[0].size(); ++c) map.w_grid.push_back(parse_double(cells[0][c], origin));
  for (std::size_t r = 1; r < cells.size(); ++r) {
    const auto& row = cells[r];
    if (row.size() != map.w_grid.size() + 1) throw DataError(origin + ": ragged engine map row " + std::to_string(r));
    if (row[0] == "T_max_Nm") {
      for (std::size_t c = 1; c < row.size(); ++c) map.T_max_curve.push_back(parse_double(row[c], origin));
      continue;
    }
    map.T_grid.push_back(parse_double(row[0], origin));
  }
  // Body is stored by rows of T in the file; transpose into w-major storage.
  map.mdot.assign(map.w_grid.size() * map.T_grid.size(), 0.0);
  std::size_t j = 0;
  for (std::size_t r = 1; r < cells.size(); ++r) {
    if (cells[r][0] == "T_max_Nm") continue;
    for (std::size_t i = 0; i < map.w_grid.size(); ++i) map.at(i, j) = parse_double(cells[r][i + 1], origin);
    ++j;
  }
  if (map.T_max_curve.empty()) map.T_max_curve.assign(map.w_grid.size(), map.T_grid.back());
  map.validate();
  return map;
}

void EngineMap::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "T_Nm\\w_radps";
  for (double w : w_grid) out << ',' << format_double(w);
  out << '\n';
  for (std::size_t j = 0; j < nT(); ++j) {
    out << format_double(T_grid[j]);
    for (std::size_t i = 0; i < nw(); ++i) out << ',' << format_double(at(i, j));
    out << '\n';
  }
  out << "T_max_Nm";
  for (double t : T_max_curve) out << ',' << format_double(t);
  out << '\n';
}

EngineMap monotonize(EngineMap map) {
  for (std::size_t i = 0; i < map.nw(); ++i)
    for (std::size_t j = 1; j < map.nT(); ++j) map.at(i, j) = std::max(map.at(i, j), map.at(i, j - 1));
  return map;
}

EngineMap scale_map(const EngineMap& ref, double T_max_new, double w_max_new) {
  if (!(T_max_new > 0.0) || !(w_max_new > 0.0)) throw std::invalid_argument("scale targets must be positive");
  const double f_T = T_max_new / ref.T_grid.back();
  const double f_w = ref.w_max() / w_max_new;
  EngineMap out = ref;
  for (auto& T : out.T_grid) T *= f_T;
  for (auto& T : out.T_max_curve) T = T == ref.T_grid.back() ? T_max_new : T * f_T;
  for (auto& w : out.w_grid) w /= f_w;
  // Exact targets, free of rounding in the products above.
  out.T_grid.back() = T_max_new;
  out.w_grid.back() = w_max_new;
  return out;
}

EngineMap scale_fuel_flow(EngineMap map, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("fuel scaling factor must be positive");
  for (auto& m : map.mdot) m *= factor;
  return map;
}

std::vector<double> efficiency(const EngineMap& map) {
  std::vector<double> eta(map.mdot.size(), 0.0);
  for (std::size_t i = 0; i < map.nw(); ++i) {
    for (std::size_t j = 0; j < map.nT(); ++j) {
      const double work = map.T_grid[j] * map.w_grid[i];
      const double m = map.at(i, j);
      if (m == 0.0) {
        if (work != 0.0) {
          throw DataError("corrupt engine map: zero fuel flow at w=" + format_double(map.w_grid[i]) +
                          ", T=" + format_double(map.T_grid[j]));
        }
        continue;
      }
      eta[i * map.nT() + j] = work / (m * map.H_u);
    }
  }
  return eta;
}

double traction_power(double F_t, double v, double eta_e, double eta_t) {
  if (!(F_t >= 0.0) || !(v >= 0.0)) throw std::invalid_argument("traction_power: negative force or speed");
  if (!(eta_e > 0.0 && eta_e <= 1.0) || !(eta_t > 0.0 && eta_t <= 1.0)) {
    throw std::invalid_argument("traction_power: efficiencies must lie in (0, 1]");
  }
  return F_t * v / (eta_e * eta_t);
}

void GearSchedule::validate() const {
  if (gears.size() != 4) throw DataError("gear schedule must have exactly 4 gears");
  if (!(final_drive > 0.0) || !(wheel_radius > 0.0) || !(hysteresis >= 0.0)) {
    throw DataError("gear schedule: final drive and wheel radius must be positive");
  }
  if (gears.front().v_low != 0.0) throw DataError("first gear band must start at 0");
  for (std::size_t g = 0; g < gears.size(); ++g) {
    const auto& gr = gears[g];
    if (!(gr.ratio > 0.0) || !(gr.v_high > gr.v_low)) throw DataError("gear bands must be ordered");
    if (g > 0 && gr.v_low != gears[g - 1].v_high) throw DataError("gear bands must be contiguous");
    if (!(gr.F_t_max > 0.0) || !(gr.P_max > 0.0)) throw DataError("gear limits must be positive");
  }
}

int select_gear(double v, const GearSchedule& sched) {
  for (std::size_t g = 0; g < sched.gears.size(); ++g)
    if (v <= sched.gears[g].v_high) return static_cast<int>(g) + 1;
  log_warn("speed " + format_double(v) + " m/s beyond gear schedule; using top gear");
  return static_cast<int>(sched.gears.size());
}

int GearSelector::update(double v) {
  if (!current_) {
    current_ = select_gear(v, *sched_);
    return *current_;
  }
  int g = *current_;
  const int top = static_cast<int>(sched_->gears.size());
  while (g < top && v > sched_->gear(g).v_high) ++g;
  while (g > 1 && v < sched_->gear(g - 1).v_high - sched_->hysteresis) --g;
  current_ = g;
  return g;
}

double Powertrain::engine_speed(double v, int gear) const {
  const double G = schedule.gear(gear).ratio * schedule.final_drive;
  return std::max(w_idle, v * G / schedule.wheel_radius);
}

double Powertrain::engine_torque(double F_t, int gear) const {
  const double G = schedule.gear(gear).ratio * schedule.final_drive;
  return F_t * schedule.wheel_radius / (G * eta_t);
}

double Powertrain::traction_limit(double v, int gear) const {
  const double G = schedule.gear(gear).ratio * schedule.final_drive;
  const double w = engine_speed(v, gear);
  if (w > map.w_max() * (1 + 1e-12)) return 0.0;
  return map.T_max_at(w) * G * eta_t / schedule.wheel_radius;
}

double Powertrain::idle_flow() const { return map.mdot_at(w_idle, 0.0); }

double Powertrain::power_map(double v, double F_t, int gear) const {
  return map.mdot_at(engine_speed(v, gear), engine_torque(F_t, gear)) * map.H_u;
}

double Powertrain::fuel_flow(double v, double F_t, int gear, bool engine_on) const {
  if (!engine_on) return 0.0;
  if (!(F_t > 0.0)) return idle_flow();
  const double w = engine_speed(v, gear);
  const double T = engine_torque(F_t, gear);
  if (w > map.w_max() * (1 + 1e-9) || T > map.T_max_at(w) * (1 + 1e-9)) {
    throw std::out_of_range("infeasible engine operating point: v=" + format_double(v) + " m/s, F_t=" +
                            format_double(F_t) + " N, gear " + std::to_string(gear) + " (w=" + format_double(w) +
                            ", T=" + format_double(T) + ")");
  }
  return map.mdot_at(w, std::min(T, map.T_max_at(w)));
}

double fuel_flow(double v, double F_t, int gear, const Powertrain& pt, bool engine_on) {
  return pt.fuel_flow(v, F_t, gear, engine_on);
}

std::pair<double, double> Powertrain::band_limits(int gear) const {
  const auto& gr = schedule.gear(gear);
  constexpr int kSamples = 401;
  double F_best = 0.0;
  double P_best = 0.0;
  for (int i = 0; i < kSamples; ++i) {
    const double v = gr.v_low + (gr.v_high - gr.v_low) * i / (kSamples - 1);
    const double F = traction_limit(v, gear);
    F_best = std::max(F_best, F);
    if (F > 0.0) P_best = std::max(P_best, power_map(v, F, gear));
  }
  return {F_best, P_best};
}

double Powertrain::limits_mismatch() const {
  double worst = 0.0;
  for (int g = 1; g <= static_cast<int>(schedule.gears.size()); ++g) {
    const auto [F, P] = band_limits(g);
    const auto& gr = schedule.gear(g);
    worst = std::max(worst, std::abs(F - gr.F_t_max) / F);
    worst = std::max(worst, std::abs(P - gr.P_max) / P);
  }
  return worst;
}

Powertrain Powertrain::from_config(const Config& cfg) {
  Powertrain pt;
  const double H_u = cfg.number_or("powertrain.H_u", 42600.0);
  EngineMap ref = monotonize(EngineMap::load_csv(cfg.path("powertrain.engine_map"), H_u));
  const double T_new = cfg.number_or("powertrain.T_max_new", 1100.0);
  const double w_new = cfg.number_or("powertrain.w_max_new_rpm", 2300.0) * kRpmToRadps;
  EngineMap scaled = scale_map(ref, T_new, w_new);
  const std::string fuel_scaling = cfg.string_or("powertrain.fuel_scaling", "power");
  if (fuel_scaling == "power") {
    scaled = scale_fuel_flow(std::move(scaled), (T_new / ref.T_grid.back()) * (w_new / ref.w_max()));
  } else if (fuel_scaling != "reuse") {
    throw DataError("powertrain.fuel_scaling must be \"power\" or \"reuse\"");
  }
  pt.map = std::move(scaled);
  pt.eta_t = cfg.number_or("vehicle.eta_t", 0.92);
  pt.w_idle = cfg.number_or("powertrain.w_idle_rpm", 600.0) * kRpmToRadps;
  if (!pt.map.covers(pt.w_idle, 0.0)) throw DataError("idle speed outside the scaled engine map");

  const auto ratios = cfg.numbers("gears.ratios");
  const auto upshift = cfg.numbers("gears.band_top_mps");
  if (ratios.size() != 4 || upshift.size() != 4) throw DataError("gears.ratios and gears.band_top_mps need 4 entries");
  pt.schedule.final_drive = cfg.number("gears.final_drive");
  pt.schedule.wheel_radius = cfg.number("gears.wheel_radius");
  pt.schedule.hysteresis = cfg.number_or("gears.hysteresis_mps", 1.0);
  double lo = 0.0;
  for (std::size_t g = 0; g < 4; ++g) {
    Gear gear;
    gear.ratio = ratios[g];
    gear.v_low = lo;
    gear.v_high = upshift[g];
    lo = upshift[g];
    pt.schedule.gears.push_back(gear);
  }
  const bool stored = cfg.has("gears.F_t_max") && cfg.has("gears.P_max");
  std::vector<double> Fs = stored ? cfg.numbers("gears.F_t_max") : std::vector<double>{};
  std::vector<double> Ps = stored ? cfg.numbers("gears.P_max") : std::vector<double>{};
  for (int g = 1; g <= 4; ++g) {
    auto& gear = pt.schedule.gears[static_cast<std::size_t>(g - 1)];
    if (stored) {
      if (Fs.size() != 4 || Ps.size() != 4) throw DataError("gears.F_t_max and gears.P_max need 4 entries");
      gear.F_t_max = Fs[static_cast<std::size_t>(g - 1)];
      gear.P_max = Ps[static_cast<std::size_t>(g - 1)];
    } else {
      std::tie(gear.F_t_max, gear.P_max) = pt.band_limits(g);
    }
  }
  pt.schedule.validate();
  return pt;
}

std::array<double, 3> choose_gear_bands(const Powertrain& pt, double v_top, double step) {
  constexpr double kFine = 0.1;
  const int n_fine = static_cast<int>(std::lround(v_top / kFine)) + 1;
  const int n_gears = static_cast<int>(pt.schedule.gears.size());
  const double neg_inf = -std::numeric_limits<double>::infinity();
  // Mean wheel-to-fuel efficiency over load fractions at each fine speed, per gear.
  std::vector<std::vector<double>> eff(static_cast<std::size_t>(n_gears), std::vector<double>(static_cast<std::size_t>(n_fine)));
  for (int g = 1; g <= n_gears; ++g) {
    const double G = pt.schedule.gear(g).ratio * pt.schedule.final_drive;
    for (int i = 0; i < n_fine; ++i) {
      const double v = i * kFine;
      double e = neg_inf;
      if (v * G / pt.schedule.wheel_radius <= pt.map.w_max()) {
        e = 0.0;
        const double F_lim = pt.traction_limit(v, g);
        for (int k = 1; k <= 10; ++k) {
          const double F = F_lim * k / 10.0;
          e += F * v / (pt.power_map(v, F, g)) / 10.0;
        }
      }
      eff[static_cast<std::size_t>(g - 1)][static_cast<std::size_t>(i)] = e;
    }
  }
  auto band_score = [&](int g, int i0, int i1) {  // fine indices (i0, i1]
    double s = 0.0;
    for (int i = i0 + 1; i <= i1; ++i) s += eff[static_cast<std::size_t>(g - 1)][static_cast<std::size_t>(i)];
    return s;
  };
  const int stride = static_cast<int>(std::lround(step / kFine));
  double best = neg_inf;
  std::array<int, 3> best_idx{0, 0, 0};
  for (int b1 = stride; b1 < n_fine - 1; b1 += stride) {
    const double s1 = band_score(1, -1, b1);
    if (s1 == neg_inf) break;
    for (int b2 = b1 + stride; b2 < n_fine - 1; b2 += stride) {
      const double s2 = band_score(2, b1, b2);
      if (s2 == neg_inf) break;
      for (int b3 = b2 + stride; b3 < n_fine - 1; b3 += stride) {
        const double s3 = band_score(3, b2, b3);
        if (s3 == neg_inf) break;
        const double s4 = band_score(4, b3, n_fine - 1);
        if (s4 == neg_inf) continue;
        const double total = s1 + s2 + s3 + s4;
        if (total > best) {
          best = total;
          best_idx = {b1, b2, b3};
        }
      }
    }
  }
  if (best == neg_inf) throw DataError("no feasible gear band split");
  return {best_idx[0] * kFine, best_idx[1] * kFine, best_idx[2] * kFine};
}

}  // namespace ecohmpc
