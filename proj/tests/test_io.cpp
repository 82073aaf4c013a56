#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cavmpc/scenario_io.hpp"
#include "cavmpc/sweep.hpp"
#include "cavmpc/trace_io.hpp"
#include "support/files.hpp"

using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("cavmpc_test_" + tag);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("canonical text survives a parse and serialize cycle") {
  const cavmpc::ScenarioConfig def{};
  const std::string text = cavmpc::serialize_scenario(def);
  const cavmpc::ScenarioConfig back = cavmpc::parse_scenario_text(text, "canon");
  REQUIRE(cavmpc::serialize_scenario(back) == text);

  REQUIRE(back.n_vehicles == def.n_vehicles);
  REQUIRE(back.duration == def.duration);
  REQUIRE(back.seed == def.seed);
  REQUIRE(back.mpc.horizon == def.mpc.horizon);
  REQUIRE(back.mpc.weights.w_slack == def.mpc.weights.w_slack);
  REQUIRE(back.rls.gamma0 == def.rls.gamma0);
}

TEST_CASE("round trip keeps awkward values bit-exact") {
  cavmpc::ScenarioConfig cfg;
  cfg.n_vehicles = 2;
  cfg.p0 = -1.0 / 3.0;
  cfg.duration = 0.1 * 7;  // not representable, exercises %.17g
  cfg.seed = UINT64_MAX;
  cfg.l_c = 4.75;
  cfg.d_f = 87.3;
  cfg.perturbation = 0.125;
  cfg.init = {{-40.000000000000007, 11.2}, {-77.7, 0.30000000000000004}};
  cfg.departures = {{2.5, 2}};
  cfg.ovm.alpha = 0.9;
  cfg.ovm.s_0 = 5.5;
  cfg.mpc.limits.u_min = -4.5;
  cfg.mpc.horizon = 37;
  cfg.mpc.weights.w_ev = 0.1 + 0.2;
  cfg.mpc.qp_tol = 3e-7;
  cfg.rls.gamma0 << 0.7, 0.11, 0.17;
  cfg.rls.cov0 = 1e-3;
  cfg.rls.xi = 0.97;

  const std::string text = cavmpc::serialize_scenario(cfg);
  const cavmpc::ScenarioConfig back = cavmpc::parse_scenario_text(text, "tweaked");

  REQUIRE(back.p0 == cfg.p0);
  REQUIRE(back.duration == cfg.duration);
  REQUIRE(back.seed == cfg.seed);
  REQUIRE(back.init.size() == 2);
  REQUIRE(back.init[0].p == cfg.init[0].p);
  REQUIRE(back.init[1].v == cfg.init[1].v);
  REQUIRE(back.departures.size() == 1);
  REQUIRE(back.departures[0].time == 2.5);
  REQUIRE(back.departures[0].vehicle_id == 2);
  REQUIRE(back.mpc.weights.w_ev == cfg.mpc.weights.w_ev);
  REQUIRE(back.rls.gamma0 == cfg.rls.gamma0);
  REQUIRE(back.rls.xi == cfg.rls.xi);
  REQUIRE(cavmpc::serialize_scenario(back) == text);
}

TEST_CASE("shipped scenario files parse") {
  const fs::path dir{SCENARIO_DIR};

  const cavmpc::ScenarioConfig three = cavmpc::parse_scenario((dir / "three_vehicle.ini").string());
  REQUIRE(three.n_vehicles == 3);
  REQUIRE(three.duration == 400.0);
  REQUIRE(three.seed == 1);
  REQUIRE(three.ovm.v_d == 15.0);
  REQUIRE(three.mpc.horizon == 50);
  REQUIRE(three.mpc.weights.w_slack == 1e6);
  REQUIRE(three.rls.gamma0(0) == 0.67);

  const cavmpc::ScenarioConfig six = cavmpc::parse_scenario((dir / "six_vehicle.ini").string());
  REQUIRE(six.n_vehicles == 6);
  REQUIRE(six.seed == 7);
}

TEST_CASE("comments, spacing and CRLF are tolerated") {
  const std::string text =
      "; leading comment\r\n"
      "  [scenario]  \r\n"
      "n_vehicles = 4   # inline comment\r\n"
      "\r\n"
      "seed=9\r\n"
      "[controller]\r\n"
      "\thorizon =  25\r\n";
  const cavmpc::ScenarioConfig cfg = cavmpc::parse_scenario_text(text, "crlf");
  REQUIRE(cfg.n_vehicles == 4);
  REQUIRE(cfg.seed == 9);
  REQUIRE(cfg.mpc.horizon == 25);
  // untouched sections keep their defaults
  REQUIRE(cfg.ovm.alpha == 0.8);
}

TEST_CASE("parse errors name the line and the key") {
  using cavmpc::ParseError;
  const auto parse = [](const std::string& text) {
    return cavmpc::parse_scenario_text(text, "cfg");
  };

  SECTION("unknown section") {
    REQUIRE_THROWS_WITH(parse("[physics]\n"), ContainsSubstring("unknown section [physics]"));
    REQUIRE_THROWS_WITH(parse("\n[physics]\n"), ContainsSubstring("cfg:2"));
  }
  SECTION("unterminated section header") {
    REQUIRE_THROWS_WITH(parse("[scenario\n"), ContainsSubstring("unterminated"));
  }
  SECTION("key before any section") {
    REQUIRE_THROWS_WITH(parse("alpha = 1\n"), ContainsSubstring("outside any section"));
  }
  SECTION("missing equals sign") {
    REQUIRE_THROWS_WITH(parse("[scenario]\nn_vehicles 4\n"),
                        ContainsSubstring("expected key = value"));
  }
  SECTION("unknown key names its section") {
    REQUIRE_THROWS_WITH(parse("[scenario]\nwheels = 4\n"),
                        ContainsSubstring("unknown key 'wheels' in [scenario]"));
    REQUIRE_THROWS_WITH(parse("[hdv]\ngain = 1\n"),
                        ContainsSubstring("unknown key 'gain' in [hdv]"));
  }
  SECTION("bad number names the key and line") {
    REQUIRE_THROWS_WITH(parse("[scenario]\np0 = fast\n"),
                        ContainsSubstring("cfg:2: p0: invalid number 'fast'"));
    REQUIRE_THROWS_WITH(parse("[scenario]\nn_vehicles = 3.5\n"),
                        ContainsSubstring("n_vehicles: invalid integer"));
    REQUIRE_THROWS_WITH(parse("[scenario]\nhdv_only = maybe\n"),
                        ContainsSubstring("hdv_only: invalid boolean"));
    REQUIRE_THROWS_WITH(parse("[scenario]\nseed = -1\n"),
                        ContainsSubstring("seed: invalid unsigned integer"));
  }
  SECTION("departures demand time:id entries") {
    REQUIRE_THROWS_WITH(parse("[scenario]\ndepartures = 5.0\n"),
                        ContainsSubstring("expected time:id"));
  }
  SECTION("gamma0 demands three components") {
    REQUIRE_THROWS_WITH(parse("[estimator]\ngamma0 = 1, 2\n"),
                        ContainsSubstring("gamma0 needs three components"));
  }
  SECTION("init lists must pair up") {
    REQUIRE_THROWS_WITH(parse("[scenario]\ninit_positions = -10, -20, -30\ninit_speeds = 1, 2\n"),
                        ContainsSubstring("must pair up"));
  }
  SECTION("semantic errors surface as parse errors naming the key") {
    REQUIRE_THROWS_AS(parse("[limits]\nv_min = 20\n"), ParseError);
    REQUIRE_THROWS_WITH(parse("[limits]\nv_min = 20\n"), ContainsSubstring("v_min"));
    REQUIRE_THROWS_WITH(parse("[scenario]\nn_vehicles = 1\n"), ContainsSubstring("n_vehicles"));
    REQUIRE_THROWS_WITH(parse("[estimator]\nxi = 1.5\n"), ContainsSubstring("xi"));
  }
  SECTION("missing file") {
    REQUIRE_THROWS_WITH(cavmpc::parse_scenario("/nonexistent/path/to/run.ini"),
                        ContainsSubstring("cannot open"));
  }
}

TEST_CASE("output tables have fixed headers and full row coverage") {
  cavmpc::ScenarioConfig cfg;
  cfg.duration = 2.0;
  cfg.seed = 3;
  const auto [trace, metrics] = cavmpc::run_simulation(cfg);

  const fs::path dir = fresh_dir("tables");
  cavmpc::write_outputs(trace, metrics, dir / "nested");  // creates missing directories

  const auto traj = cavmpc::testing::split_lines(cavmpc::testing::read_file(dir / "nested" / "trajectory.csv"));
  const auto cav = cavmpc::testing::split_lines(cavmpc::testing::read_file(dir / "nested" / "cav.csv"));
  const auto est = cavmpc::testing::split_lines(cavmpc::testing::read_file(dir / "nested" / "estimates.csv"));
  const auto met = cavmpc::testing::read_file(dir / "nested" / "metrics.txt");

  REQUIRE(traj.at(0) == "t,id,p,v,u,delta_p,delta_v");
  REQUIRE(cav.at(0) == "t,e_p,e_v,s1,slack,solver_status,solve_time");
  REQUIRE(est.at(0) == "t,hdv_id,gamma1,gamma2,gamma3,eta,nu,rho,residual");

  // 20 steps, three vehicles, two estimated neighbours
  REQUIRE(traj.size() == 1 + 60);
  REQUIRE(cav.size() == 1 + 20);
  REQUIRE(est.size() == 1 + 40);

  REQUIRE_THAT(met, ContainsSubstring("collision = 0\n"));
  REQUIRE_THAT(met, ContainsSubstring("steps = 20\n"));
  REQUIRE_THAT(met, ContainsSubstring("solve_ms_median = "));

  // same trace written twice is byte-identical, wall clock included
  cavmpc::write_outputs(trace, metrics, dir / "again");
  REQUIRE(cavmpc::testing::read_file(dir / "again" / "trajectory.csv") ==
          cavmpc::testing::read_file(dir / "nested" / "trajectory.csv"));
  REQUIRE(cavmpc::testing::read_file(dir / "again" / "cav.csv") ==
          cavmpc::testing::read_file(dir / "nested" / "cav.csv"));
  REQUIRE(cavmpc::testing::read_file(dir / "again" / "metrics.txt") == met);

  fs::remove_all(dir);
}

TEST_CASE("repeated runs differ only in wall-clock columns") {
  cavmpc::ScenarioConfig cfg;
  cfg.duration = 2.0;
  cfg.seed = 11;

  const fs::path dir = fresh_dir("rerun");
  {
    const auto [trace, metrics] = cavmpc::run_simulation(cfg);
    cavmpc::write_outputs(trace, metrics, dir / "a");
  }
  {
    const auto [trace, metrics] = cavmpc::run_simulation(cfg);
    cavmpc::write_outputs(trace, metrics, dir / "b");
  }

  REQUIRE(cavmpc::testing::read_file(dir / "a" / "trajectory.csv") ==
          cavmpc::testing::read_file(dir / "b" / "trajectory.csv"));
  REQUIRE(cavmpc::testing::read_file(dir / "a" / "estimates.csv") ==
          cavmpc::testing::read_file(dir / "b" / "estimates.csv"));

  // cav.csv ends in solve seconds, metrics.txt carries solve_ms lines;
  // mask those and demand the rest byte-equal
  REQUIRE(cavmpc::testing::strip_last_column(cavmpc::testing::read_file(dir / "a" / "cav.csv")) ==
          cavmpc::testing::strip_last_column(cavmpc::testing::read_file(dir / "b" / "cav.csv")));
  REQUIRE(cavmpc::testing::drop_keys_containing(cavmpc::testing::read_file(dir / "a" / "metrics.txt"),
                                             "solve_ms") ==
          cavmpc::testing::drop_keys_containing(cavmpc::testing::read_file(dir / "b" / "metrics.txt"),
                                             "solve_ms"));

  fs::remove_all(dir);
}

TEST_CASE("sweep entries cycle the platoon size unless pinned") {
  cavmpc::RunManifest manifest;
  manifest.seeds = {10, 11, 12, 13, 14};
  manifest.base.init = {{-10.0, 1.0}, {-20.0, 1.0}, {-30.0, 1.0}};

  const int expected[] = {3, 4, 5, 6, 3};
  for (size_t i = 0; i < manifest.seeds.size(); ++i) {
    const cavmpc::ScenarioConfig cfg = cavmpc::sweep_scenario(manifest, i);
    REQUIRE(cfg.seed == manifest.seeds[i]);
    REQUIRE(cfg.n_vehicles == expected[i]);
    // explicit layout survives only at its own vehicle count
    REQUIRE(cfg.init.empty() == (cfg.n_vehicles != 3));
  }

  manifest.vehicles_override = 5;
  manifest.horizon_override = 30;
  manifest.duration_override = 42.0;
  const cavmpc::ScenarioConfig pinned = cavmpc::sweep_scenario(manifest, 0);
  REQUIRE(pinned.n_vehicles == 5);
  REQUIRE(pinned.mpc.horizon == 30);
  REQUIRE(pinned.duration == 42.0);
  REQUIRE(pinned.init.empty());
}

TEST_CASE("sweep executes every seed and reports files") {
  cavmpc::RunManifest manifest;
  manifest.seeds = {21, 22};
  manifest.vehicles_override = 3;
  manifest.duration_override = 2.0;
  manifest.out_dir = fresh_dir("sweep");

  const cavmpc::SweepReport report = cavmpc::run_sweep(manifest);
  REQUIRE(report.runs.size() == 2);
  REQUIRE(report.completed_runs == 2);
  REQUIRE(report.collisions == 0);
  REQUIRE(report.ok());
  REQUIRE(report.runs[0].seed == 21);
  REQUIRE(report.runs[1].seed == 22);

  const auto runs = cavmpc::testing::split_lines(cavmpc::testing::read_file(manifest.out_dir / "runs.csv"));
  REQUIRE(runs.size() == 1 + 2);
  REQUIRE_THAT(runs.at(0), ContainsSubstring("seed,n_vehicles,completed"));
  REQUIRE_THAT(cavmpc::testing::read_file(manifest.out_dir / "aggregate.txt"),
               ContainsSubstring("completed = 2\n"));
  REQUIRE(fs::exists(manifest.out_dir / "run_seed21" / "trajectory.csv"));
  REQUIRE(fs::exists(manifest.out_dir / "run_seed22" / "metrics.txt"));

  fs::remove_all(manifest.out_dir);

  SECTION("no seeds is refused") {
    cavmpc::RunManifest empty;
    REQUIRE_THROWS_AS(cavmpc::run_sweep(empty), std::invalid_argument);
  }
}
