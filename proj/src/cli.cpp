#include "ecohmpc/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "ecohmpc/config.hpp"
#include "ecohmpc/csv.hpp"
#include "ecohmpc/error.hpp"
#include "ecohmpc/greenwave.hpp"
#include "ecohmpc/log.hpp"
#include "ecohmpc/mapfit.hpp"
#include "ecohmpc/powertrain.hpp"
#include "ecohmpc/sim.hpp"

namespace ecohmpc {

namespace fs = std::filesystem;

namespace {

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw DataError(std::string(what) + " not found: " + p.string());
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
  if (!f) throw DataError("write failed: " + p.string());
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

std::vector<int> parse_horizons(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw CLI::ValidationError("--horizons", "not an integer list: " + s);
    if (n < 2) throw CLI::ValidationError("--horizons", "every horizon must be at least 2");
    out.push_back(n);
  }
  if (out.empty()) throw CLI::ValidationError("--horizons", "empty list");
  return out;
}

RouteScenario load_scenario(const fs::path& p) {
  require_file(p, "scenario");
  return RouteScenario::load(p);
}

std::string g(double x) { return format_double(x); }

double percentile95(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
  return v[std::min(v.size(), std::max<std::size_t>(idx, 1)) - 1];
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Eco cruise control for a diesel city bus: hybrid MPC with an engine on/off decision", "ecohmpc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string engine, gears, fit_out;
  auto* fit = app.add_subcommand("fit-map", "fit per-gear convex quadratic power surrogates");
  fit->add_option("--engine", engine, "reference engine map CSV")->required();
  fit->add_option("--gears", gears, "vehicle/powertrain/gear config")->required();
  fit->add_option("--out", fit_out, "coefficient CSV to write")->required();

  std::string spat_path, gw_out, signal_id;
  double position = 0.0, now = 0.0, v_min = 5.0, v_max = 13.9, v_set = 13.9, margin = 0.0;
  auto* gw = app.add_subcommand("gwos", "green-wave speed intervals and reference speed");
  gw->add_option("--spat", spat_path, "signal timing JSON")->required();
  gw->add_option("--position", position, "host position [m]")->required();
  gw->add_option("--time", now, "current time [s]")->required();
  gw->add_option("--v-min", v_min, "lowest admissible speed [m/s]")->capture_default_str();
  gw->add_option("--v-max", v_max, "highest admissible speed [m/s]")->capture_default_str();
  gw->add_option("--v-set", v_set, "driver set speed [m/s]")->capture_default_str();
  gw->add_option("--arrival-margin", margin, "slack kept before red [s]")->capture_default_str();
  gw->add_option("--out", gw_out, "output directory")->required();

  std::string scenario, controller = "hmpc", predictor = "frozen", run_out;
  int horizon = 8;
  auto* rn = app.add_subcommand("run", "closed-loop run of one controller");
  rn->add_option("--scenario", scenario, "scenario file")->required();
  rn->add_option("--controller", controller, "hmpc|baseline")->check(CLI::IsMember({"hmpc", "baseline"}))->capture_default_str();
  rn->add_option("--predictor", predictor, "frozen|prescient")->check(CLI::IsMember({"frozen", "prescient"}))->capture_default_str();
  rn->add_option("--horizon", horizon, "prediction horizon N (>= 2)")->check(CLI::Range(2, 1000))->capture_default_str();
  rn->add_option("--out", run_out, "output directory")->required();

  std::string cmp_scenario, cmp_horizons = "8,15", cmp_out;
  auto* cmp = app.add_subcommand("compare", "hmpc against baseline for several horizons");
  cmp->add_option("--scenario", cmp_scenario, "scenario file")->required();
  cmp->add_option("--horizons", cmp_horizons, "comma separated horizons")->capture_default_str();
  cmp->add_option("--out", cmp_out, "output directory")->required();

  std::string b_scenario, b_horizons = "8,15,25";
  int reps = 100;
  auto* bn = app.add_subcommand("bench", "solve-time statistics per horizon");
  bn->add_option("--scenario", b_scenario, "scenario file")->required();
  bn->add_option("--horizons", b_horizons, "comma separated horizons")->capture_default_str();
  bn->add_option("--reps", reps, "closed-loop control steps timed per horizon")->check(CLI::PositiveNumber)->capture_default_str();

  std::vector<int> cmp_list, bench_list;
  try {
    app.parse(argc, argv);
    if (*cmp) cmp_list = parse_horizons(cmp_horizons);
    if (*bn) bench_list = parse_horizons(b_horizons);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "ecohmpc: " << e.what() << "\n";
    return exit_usage;
  }

  try {
    if (*fit) {
      require_file(engine, "engine map");
      require_file(gears, "gear config");
      Config cfg = Config::load(gears);
      cfg.set("powertrain.engine_map", "\"" + fs::absolute(engine).string() + "\"");
      const Powertrain pt = Powertrain::from_config(cfg);
      const QuadPowerModel model = fit_powertrain(pt);
      if (fs::path(fit_out).has_parent_path()) make_out_dir(fs::path(fit_out).parent_path());
      model.save_csv(fit_out);
      for (const auto& gf : model.gears) {
        const double pmax = pt.schedule.gear(gf.gear).P_max;
        out << "gear " << gf.gear << " fit_rms " << g(gf.fit_rms) << " W (" << std::fixed << std::setprecision(2)
            << 100.0 * gf.fit_rms / pmax << "% of P_max)" << std::defaultfloat << "\n";
      }
      return exit_ok;
    }

    if (*gw) {
      require_file(spat_path, "signal timing");
      const Spat spat = Spat::load_json(spat_path);
      make_out_dir(gw_out);
      nlohmann::ordered_json j;
      j["position_m"] = position;
      j["time_s"] = now;
      auto& sigs = j["signals"] = nlohmann::ordered_json::array();
      for (const auto& sg : spat.signals) {
        if (sg.s <= position) continue;
        nlohmann::ordered_json e;
        e["id"] = sg.id;
        e["distance_m"] = sg.s - position;
        auto& ph = e["windows"] = nlohmann::ordered_json::array();
        for (const auto& p : sg.upcoming(now + margin, GreenwaveOptions{}.max_phases)) {
          const Phase rel{p.g - now, p.r - now - margin};
          if (!(rel.g < rel.r)) continue;
          nlohmann::ordered_json w{{"g_s", p.g}, {"r_s", p.r}};
          if (const auto iv = gwos_interval(sg.s - position, rel, v_min, v_max)) {
            w["v_lo"] = iv->lo;
            w["v_hi"] = iv->hi;
          } else {
            w["v_lo"] = nullptr;
            w["v_hi"] = nullptr;
          }
          ph.push_back(w);
        }
        sigs.push_back(e);
      }
      GreenwaveOptions opt;
      opt.arrival_margin = margin;
      const ReferenceSpeed ref = reference_speed(position, now, spat, {}, v_set, v_min, v_max, opt);
      j["reference"] = {{"mode", to_string(ref.mode)}, {"v_ref", ref.v_ref}};
      write_file(fs::path(gw_out) / "gwos.json", j.dump(2) + "\n");
      out << "mode " << to_string(ref.mode) << " v_ref " << g(ref.v_ref) << " m/s\n";
      return exit_ok;
    }

    if (*rn) {
      RouteScenario scn = load_scenario(scenario);
      scn.controller.N = horizon;
      make_out_dir(run_out);
      const TrajectoryLog log = run(scn, parse_controller(controller), parse_predictor(predictor));
      const Summary s = report(log, scn);
      write_file(fs::path(run_out) / "trajectory.csv", log.to_csv(scn.sim.log_wall_time));
      write_file(fs::path(run_out) / "summary.json", s.to_json());
      out << controller << " N=" << horizon << " " << predictor << ": " << g(s.distance_km) << " km, "
          << g(s.trip_time_s) << " s, " << g(s.fuel_g) << " g fuel, engine off " << g(100.0 * s.engine_off_fraction)
          << "%\n";
      return exit_ok;
    }

    if (*cmp) {
      RouteScenario scn = load_scenario(cmp_scenario);
      make_out_dir(cmp_out);
      std::ostringstream csv;
      csv << "horizon,controller,distance_km,trip_time_s,fuel_g,fuel_L,saving_pct,scenario_hash\n";
      for (int N : cmp_list) {
        scn.controller.N = N;
        const TrajectoryLog base = run(scn, ControllerKind::baseline, PredictorKind::frozen);
        const TrajectoryLog h = run(scn, ControllerKind::hmpc, PredictorKind::frozen);
        const Summary sb = report(base, scn, &base);
        const Summary sh = report(h, scn, &base);
        for (const Summary* s : {&sh, &sb}) {
          csv << N << ',' << s->controller << ',' << g(s->distance_km) << ',' << g(s->trip_time_s) << ','
              << g(s->fuel_g) << ',' << g(s->fuel_L) << ',' << g(*s->saving_pct) << ',' << s->scenario_hash << '\n';
        }
        out << "N=" << N << ": hmpc " << g(sh.fuel_g) << " g, baseline " << g(sb.fuel_g) << " g, saving "
            << std::fixed << std::setprecision(2) << *sh.saving_pct << std::defaultfloat << "%\n";
      }
      write_file(fs::path(cmp_out) / "compare.csv", csv.str());
      return exit_ok;
    }

    if (*bn) {
      RouteScenario scn = load_scenario(b_scenario);
      scn.sim.duration = reps * scn.controller.dt;
      out << "horizon,solves,mean_ms,p95_ms,real_time\n";
      const double budget = scn.controller.dt * 1000.0;
      for (int N : bench_list) {
        scn.controller.N = N;
        const TrajectoryLog log = run(scn, ControllerKind::hmpc, PredictorKind::frozen);
        double sum = 0.0;
        for (double m : log.solve_ms) sum += m;
        const double mean = log.solve_ms.empty() ? 0.0 : sum / static_cast<double>(log.solve_ms.size());
        out << N << ',' << log.solve_ms.size() << ',' << std::fixed << std::setprecision(3) << mean << ','
            << percentile95(log.solve_ms) << std::defaultfloat << ',' << (mean <= budget ? "yes" : "NO (mean exceeds dt)")
            << "\n";
      }
      return exit_ok;
    }
  } catch (const SimulationAbort& e) {
    err << "ecohmpc: aborted: " << e.what() << "\n";
    return exit_abort;
  } catch (const InfeasibleError& e) {
    err << "ecohmpc: infeasible: " << e.what() << "\n";
    return exit_abort;
  } catch (const DataError& e) {
    err << "ecohmpc: data error: " << e.what() << "\n";
    return exit_data;
  } catch (const std::invalid_argument& e) {
    err << "ecohmpc: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    err << "ecohmpc: data error: " << e.what() << "\n";
    return exit_data;
  }
  return exit_usage;
}

}  // namespace ecohmpc
