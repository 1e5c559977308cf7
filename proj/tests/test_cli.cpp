#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ecohmpc/cli.hpp"
#include "ecohmpc/mapfit.hpp"

using namespace ecohmpc;
namespace fs = std::filesystem;

namespace {

const fs::path kData = ECOHMPC_DATA_DIR;

struct Result {
  int code;
  std::string out, err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "ecohmpc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ecohmpc_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Short flat-road scenario built on the shipped one.
fs::path short_scenario(const fs::path& dir, const std::string& extra = "") {
  fs::create_directories(dir);
  const fs::path p = dir / "short.toml";
  std::ofstream(p) << "include = \"" << (kData / "scenarios" / "flat.toml").generic_string() << "\"\n[scenario]\nduration_s = 4\n"
                   << extra;
  return p;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(call({}).code, exit_usage);
  EXPECT_EQ(call({"launch"}).code, exit_usage);
  EXPECT_EQ(call({"run", "--scenario", "x.toml"}).code, exit_usage);  // missing flags
  const fs::path dir = scratch("usage");
  const std::string scn = short_scenario(dir).string();
  EXPECT_EQ(call({"run", "--scenario", scn, "--controller", "hmpc", "--predictor", "frozen", "--horizon", "1", "--out", dir.string()}).code,
            exit_usage);
  EXPECT_EQ(call({"run", "--scenario", scn, "--controller", "mpc", "--predictor", "frozen", "--horizon", "8", "--out", dir.string()}).code,
            exit_usage);
  EXPECT_EQ(call({"bench", "--scenario", scn, "--reps", "3", "--colour"}).code, exit_usage);
  EXPECT_FALSE(fs::exists(dir / "trajectory.csv"));
}

TEST(Cli, DataErrors) {
  const fs::path dir = scratch("data");
  EXPECT_EQ(call({"fit-map", "--engine", (dir / "none.csv").string(), "--gears", (kData / "bus.toml").string(), "--out",
                  (dir / "fit.csv").string()})
                .code,
            exit_data);
  fs::create_directories(dir);
  std::ofstream(dir / "bad.csv") << "w_rad_s,0,100\n62.8,abc,1\n";
  EXPECT_EQ(call({"fit-map", "--engine", (dir / "bad.csv").string(), "--gears", (kData / "bus.toml").string(), "--out",
                  (dir / "fit.csv").string()})
                .code,
            exit_data);
  EXPECT_EQ(call({"run", "--scenario", (dir / "none.toml").string(), "--controller", "hmpc", "--predictor", "frozen", "--horizon",
                  "8", "--out", dir.string()})
                .code,
            exit_data);
}

TEST(Cli, FitMapIsDeterministic) {
  const fs::path dir = scratch("fit");
  fs::create_directories(dir);
  const std::vector<std::string> base{"fit-map", "--engine", (kData / "engine_ref.csv").string(), "--gears", (kData / "bus.toml").string(),
                                      "--out"};
  auto a = base, b = base;
  a.push_back((dir / "a.csv").string());
  b.push_back((dir / "b.csv").string());
  const Result r = call(a);
  ASSERT_EQ(r.code, exit_ok) << r.err;
  ASSERT_EQ(call(b).code, exit_ok);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_NE(r.out.find("gear 4 fit_rms"), std::string::npos);
  EXPECT_EQ(QuadPowerModel::load_csv(dir / "a.csv").gears.size(), 4u);
}

TEST(Cli, RunWritesLogsAndSummary) {
  const fs::path dir = scratch("run");
  const std::string scn = short_scenario(dir).string();
  const fs::path out = dir / "out";
  const Result r = call({"run", "--scenario", scn, "--controller", "baseline", "--predictor", "frozen", "--horizon", "4", "--out", out.string()});
  ASSERT_EQ(r.code, exit_ok) << r.err;
  const std::string csv = slurp(out / "trajectory.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,s_host,v_h,v_p,d_rel,d_ITS,F_t,F_b,n,gear,P_ICE,fuel_rate,fuel_cum,mode,solve_ms");
  const std::string js = slurp(out / "summary.json");
  EXPECT_NE(js.find("\"engine_off_fraction\": 0.0"), std::string::npos) << js;
  EXPECT_NE(js.find("\"N\": 4"), std::string::npos);
}

TEST(Cli, CollisionExitsWithAbort) {
  const fs::path dir = scratch("abort");
  fs::create_directories(dir);
  std::ofstream(dir / "lead.csv") << "t_s,v_mps\n0,12\n1,12\n1.2,0\n100,0\n";
  const std::string scn = short_scenario(dir, "lead = \"lead.csv\"\nlead_gap_m = 24\n[vehicle]\nF_b_max = 1500\n").string();
  const Result r = call({"run", "--scenario", scn, "--controller", "hmpc", "--predictor", "frozen", "--horizon", "4", "--out", dir.string()});
  EXPECT_EQ(r.code, exit_abort) << r.err;
}

TEST(Cli, CompareRowsAndHash) {
  const fs::path dir = scratch("cmp");
  const std::string scn = short_scenario(dir).string();
  const Result r = call({"compare", "--scenario", scn, "--horizons", "3,4", "--out", dir.string()});
  ASSERT_EQ(r.code, exit_ok) << r.err;
  std::istringstream in(slurp(dir / "compare.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "horizon,controller,distance_km,trip_time_s,fuel_g,fuel_L,saving_pct,scenario_hash");
  std::vector<std::string> hashes;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    hashes.push_back(line.substr(line.rfind(',') + 1));
  }
  EXPECT_EQ(rows, 4);
  for (const auto& h : hashes) EXPECT_EQ(h, hashes.front());
}

TEST(Cli, BenchTableAndGwos) {
  const fs::path dir = scratch("bench");
  const std::string scn = short_scenario(dir).string();
  const Result b = call({"bench", "--scenario", scn, "--horizons", "4,6", "--reps", "3"});
  ASSERT_EQ(b.code, exit_ok) << b.err;
  EXPECT_EQ(b.out.substr(0, b.out.find('\n')), "horizon,solves,mean_ms,p95_ms,real_time");
  EXPECT_NE(b.out.find("\n4,3,"), std::string::npos) << b.out;
  EXPECT_NE(b.out.find("\n6,3,"), std::string::npos) << b.out;

  const Result g = call({"gwos", "--spat", (kData / "scenarios" / "urban_spat.json").string(), "--position", "1000", "--time", "80",
                         "--out", dir.string()});
  ASSERT_EQ(g.code, exit_ok) << g.err;
  EXPECT_NE(slurp(dir / "gwos.json").find("\"TS2\""), std::string::npos);
}
