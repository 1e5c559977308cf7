#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "ecohmpc/config.hpp"
#include "ecohmpc/error.hpp"
#include "ecohmpc/powertrain.hpp"

using namespace ecohmpc;

namespace {

const std::filesystem::path kData = ECOHMPC_DATA_DIR;

EngineMap ref_map() { return monotonize(EngineMap::load_csv(kData / "engine_ref.csv", 42600.0)); }
Powertrain bus() { return Powertrain::from_config(Config::load(kData / "bus.toml")); }

// Closed form used by the map generator, evaluated independently here.
double generator_mdot(double w, double T) {
  const double t_f = 12.0 + 6e-5 * w * w;
  const double eta_i = 0.44 - 0.06 * std::pow((w - 220.0) / 240.0, 2);
  return ((T + t_f) * w / eta_i + 1500.0) / 42600.0;
}

}  // namespace

TEST(EngineMapIo, LoadMatchesGenerator) {
  const auto m = ref_map();
  EXPECT_EQ(m.nw(), 20u);
  EXPECT_EQ(m.nT(), 19u);
  for (std::size_t i = 0; i < m.nw(); i += 3)
    for (std::size_t j = 0; j < m.nT(); j += 4) EXPECT_NEAR(m.at(i, j), generator_mdot(m.w_grid[i], m.T_grid[j]), 1e-12);
  EXPECT_DOUBLE_EQ(m.T_max(), 180.0);
}

TEST(EngineMapIo, SaveLoadRoundTrip) {
  const auto m = ref_map();
  const auto path = std::filesystem::temp_directory_path() / "ecohmpc_map_rt.csv";
  m.save_csv(path);
  const auto back = EngineMap::load_csv(path, m.H_u);
  EXPECT_EQ(back.w_grid, m.w_grid);
  EXPECT_EQ(back.T_grid, m.T_grid);
  EXPECT_EQ(back.mdot, m.mdot);
  EXPECT_EQ(back.T_max_curve, m.T_max_curve);
  std::filesystem::remove(path);
}

TEST(EngineMapIo, MalformedRejected) {
  const auto path = std::filesystem::temp_directory_path() / "ecohmpc_map_bad.csv";
  {
    std::ofstream out(path);
    out << "T\\w,10,20\n0,1,2\n10,3\n";
  }
  EXPECT_THROW(EngineMap::load_csv(path, 42600.0), DataError);
  {
    std::ofstream out(path);
    out << "T\\w,20,10\n0,1,2\n10,3,4\n";
  }
  EXPECT_THROW(EngineMap::load_csv(path, 42600.0), DataError);
  {
    std::ofstream out(path);
    out << "T\\w,10,20\n0,1,-2\n10,3,4\n";
  }
  EXPECT_THROW(EngineMap::load_csv(path, 42600.0), DataError);
  EXPECT_THROW(EngineMap::load_csv(kData / "no_such_map.csv", 42600.0), DataError);
  std::filesystem::remove(path);
}

TEST(Monotonize, CumulativeMaxAlongTorque) {
  EngineMap m;
  m.w_grid = {1.0, 2.0};
  m.T_grid = {0.0, 1.0, 2.0};
  m.mdot = {1.0, 0.5, 2.0, 3.0, 4.0, 3.5};
  m.T_max_curve = {2.0, 2.0};
  const auto c = monotonize(m);
  EXPECT_EQ(c.mdot, (std::vector<double>{1.0, 1.0, 2.0, 3.0, 4.0, 4.0}));
}

TEST(ScaleMap, IdentityAndDoubling) {
  const auto m = ref_map();
  const auto id = scale_map(m, m.T_grid.back(), m.w_max());
  EXPECT_EQ(id.T_grid, m.T_grid);
  EXPECT_EQ(id.w_grid, m.w_grid);
  EXPECT_EQ(id.mdot, m.mdot);
  const auto dbl = scale_map(m, 2.0 * m.T_grid.back(), m.w_max());
  for (std::size_t j = 0; j < m.nT(); ++j) EXPECT_DOUBLE_EQ(dbl.T_grid[j], 2.0 * m.T_grid[j]);
  EXPECT_EQ(dbl.mdot, m.mdot);
  EXPECT_THROW(scale_map(m, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(scale_map(m, 1.0, -1.0), std::invalid_argument);
}

TEST(ScaleMap, TargetsExactAndRoundTrip) {
  const auto m = ref_map();
  const double w_new = 2300.0 * 2.0 * std::numbers::pi / 60.0;
  const auto s = scale_map(m, 1100.0, w_new);
  EXPECT_EQ(s.T_grid.back(), 1100.0);
  EXPECT_EQ(s.w_grid.back(), w_new);
  const auto back = scale_map(s, m.T_grid.back(), m.w_max());
  for (std::size_t i = 0; i < m.nw(); ++i) EXPECT_NEAR(back.w_grid[i], m.w_grid[i], 1e-12 * m.w_grid[i]);
  for (std::size_t j = 0; j < m.nT(); ++j) EXPECT_NEAR(back.T_grid[j], m.T_grid[j], 1e-12 * (1.0 + m.T_grid[j]));
  for (std::size_t i = 0; i < m.nw(); ++i) EXPECT_NEAR(back.T_max_curve[i], m.T_max_curve[i], 1e-12 * m.T_max_curve[i]);
}

TEST(Efficiency, ZeroRowAndHeatingValue) {
  auto m = ref_map();
  const auto e = efficiency(m);
  for (std::size_t i = 0; i < m.nw(); ++i) EXPECT_EQ(e[i * m.nT()], 0.0);
  auto m2 = m;
  m2.H_u *= 2.0;
  const auto e2 = efficiency(m2);
  for (std::size_t k = 0; k < e.size(); ++k) EXPECT_NEAR(e2[k], 0.5 * e[k], 1e-15);
}

TEST(Efficiency, SpotCheckAgainstClosedForm) {
  const auto m = ref_map();
  const auto e = efficiency(m);
  const std::size_t cells[10][2] = {{1, 1}, {2, 7}, {4, 18}, {7, 3}, {9, 12}, {11, 9}, {13, 15}, {15, 2}, {17, 6}, {19, 10}};
  for (const auto& c : cells) {
    const double w = m.w_grid[c[0]], T = m.T_grid[c[1]];
    EXPECT_NEAR(e[c[0] * m.nT() + c[1]], T * w / (generator_mdot(w, T) * 42600.0), 1e-12);
  }
}

TEST(Efficiency, CorruptCellRejected) {
  auto m = ref_map();
  m.at(3, 5) = 0.0;
  EXPECT_THROW(efficiency(m), DataError);
}

TEST(Efficiency, PhysicalBoundOnShippedMap) {
  const auto pt = bus();
  for (double e : efficiency(pt.map)) EXPECT_LE(e, 0.6);
}

TEST(TractionPower, HandValues) {
  EXPECT_EQ(traction_power(0.0, 10.0, 0.4, 0.95), 0.0);
  EXPECT_NEAR(traction_power(1000.0, 10.0, 0.4, 0.95), 26315.789473684210, 1e-8);
  EXPECT_NEAR(traction_power(1000.0, 10.0, 0.2, 0.95), 2.0 * traction_power(1000.0, 10.0, 0.4, 0.95), 1e-9);
  EXPECT_THROW(traction_power(1.0, 1.0, 0.0, 0.9), std::invalid_argument);
  EXPECT_THROW(traction_power(1.0, 1.0, 0.4, 0.0), std::invalid_argument);
}

TEST(Gears, ScheduleAndSelection) {
  const auto pt = bus();
  const auto& s = pt.schedule;
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(select_gear(0.0, s), 1);
  for (int g = 1; g <= 3; ++g) {
    EXPECT_EQ(select_gear(s.gear(g).v_high, s), g);
    EXPECT_EQ(select_gear(s.gear(g).v_high + 1e-9, s), g + 1);
  }
  EXPECT_EQ(select_gear(s.v_covered() + 5.0, s), 4);
}

TEST(Gears, HysteresisSweep) {
  const auto pt = bus();
  const auto& s = pt.schedule;
  GearSelector sel(s);
  const double step = 1e-4;
  std::vector<double> up(4, NAN), down(4, NAN);
  int prev = sel.update(0.0);
  for (double v = 0.0; v <= 18.0; v += step) {
    const int g = sel.update(v);
    if (g != prev) up[static_cast<std::size_t>(prev)] = v;
    prev = g;
  }
  for (double v = 18.0; v >= 0.0; v -= step) {
    const int g = sel.update(v);
    if (g != prev) down[static_cast<std::size_t>(g)] = v;
    prev = g;
  }
  for (std::size_t g = 1; g <= 3; ++g) EXPECT_NEAR(up[g] - down[g], s.hysteresis, 2.5 * step) << g;
}

TEST(Gears, StoredLimitsMatchMap) {
  const auto pt = bus();
  EXPECT_LE(pt.limits_mismatch(), 1e-9);
}

TEST(Gears, BandSearchReproducesShippedBands) {
  const auto pt = bus();
  const auto b = choose_gear_bands(pt, pt.schedule.v_covered(), 0.5);
  for (int g = 1; g <= 3; ++g) EXPECT_NEAR(b[static_cast<std::size_t>(g - 1)], pt.schedule.gear(g).v_high, 1e-9);
}

TEST(FuelFlow, EngineOffAndIdle) {
  const auto pt = bus();
  EXPECT_EQ(fuel_flow(8.0, 5000.0, 3, pt, false), 0.0);
  EXPECT_EQ(fuel_flow(0.0, 0.0, 1, pt, false), 0.0);
  EXPECT_DOUBLE_EQ(fuel_flow(8.0, 0.0, 4, pt, true), pt.idle_flow());
  EXPECT_GT(pt.idle_flow(), 0.0);
}

TEST(FuelFlow, KnotsAndMidpoints) {
  const auto pt = bus();
  const int gear = 2;
  const double G = pt.schedule.gear(gear).ratio * pt.schedule.final_drive;
  const double r = pt.schedule.wheel_radius;
  const auto& m = pt.map;
  // Knots at or above idle speed and below full load.
  for (std::size_t i = 6; i < 10; ++i) {
    for (std::size_t j = 1; j < 8; ++j) {
      const double v = m.w_grid[i] * r / G;
      const double F = m.T_grid[j] * G * pt.eta_t / r;
      EXPECT_NEAR(fuel_flow(v, F, gear, pt, true), m.at(i, j), 1e-9 * m.at(i, j));
      const double vm = 0.5 * (m.w_grid[i] + m.w_grid[i + 1]) * r / G;
      const double Fm = 0.5 * (m.T_grid[j] + m.T_grid[j + 1]) * G * pt.eta_t / r;
      const double mean = 0.25 * (m.at(i, j) + m.at(i + 1, j) + m.at(i, j + 1) + m.at(i + 1, j + 1));
      EXPECT_NEAR(fuel_flow(vm, Fm, gear, pt, true), mean, 1e-9 * mean);
    }
  }
}

TEST(FuelFlow, MonotoneInTraction) {
  const auto pt = bus();
  for (int g = 1; g <= 4; ++g) {
    const auto& gr = pt.schedule.gear(g);
    for (double v = gr.v_low; v <= gr.v_high; v += 0.25) {
      const double lim = pt.traction_limit(v, g);
      double prev = 0.0;
      for (int k = 0; k <= 50; ++k) {
        const double f = fuel_flow(v, lim * k / 50.0, g, pt, true);
        EXPECT_GE(f, prev - 1e-15);
        prev = f;
      }
    }
  }
}

TEST(FuelFlow, OutsideMapIdentified) {
  const auto pt = bus();
  const double lim = pt.traction_limit(4.0, 1);
  EXPECT_THROW(fuel_flow(4.0, 1.01 * lim, 1, pt, true), std::out_of_range);
  EXPECT_THROW(fuel_flow(30.0, 100.0, 1, pt, true), std::out_of_range);
  EXPECT_NO_THROW(fuel_flow(30.0, 100.0, 1, pt, false));
}

TEST(PowerMap, ConsistentWithTractionPowerWithoutSlip) {
  const auto pt = bus();
  // eta_e from the map at the same point reproduces F v / (eta_e eta_t).
  const int g = 3;
  const double v = 6.0, F = 6000.0;
  const double P = pt.power_map(v, F, g);
  const double w = pt.engine_speed(v, g), T = pt.engine_torque(F, g);
  const double eta_e = T * w / (pt.map.mdot_at(w, T) * pt.map.H_u);
  EXPECT_NEAR(P, traction_power(F, v, eta_e, pt.eta_t), 1e-9 * P);
}
