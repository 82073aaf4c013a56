#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>

#include "cavmpc/simulation.hpp"

using namespace cavmpc;
using Catch::Matchers::WithinAbs;

namespace {

ScenarioConfig base_config() {
  ScenarioConfig cfg;
  return cfg;
}

bool rows_equal(const VehicleRow& a, const VehicleRow& b) {
  return a.t == b.t && a.id == b.id && a.p == b.p && a.v == b.v && a.u == b.u &&
         a.delta_p == b.delta_p && a.delta_v == b.delta_v;
}

}  // namespace

TEST_CASE("row bookkeeping matches the step arithmetic") {
  ScenarioConfig cfg = base_config();
  cfg.duration = 10.0;  // nobody stops this early
  const auto [trace, metrics] = run_simulation(cfg);
  CHECK(trace.steps == 100);
  CHECK(trace.vehicles.size() == 300);  // 3 vehicles per step
  CHECK(trace.cav.size() == 100);
  CHECK(trace.estimates.size() == 200);  // 2 preceding vehicles per step
  CHECK_FALSE(trace.stopped_early);
  CHECK(metrics.steps == 100);
  CHECK_THAT(metrics.end_time, WithinAbs(10.0, 1e-12));

  // Rows come in front-to-back blocks: leader id 3, then 2, then 1.
  CHECK(trace.vehicles[0].id == 3);
  CHECK(trace.vehicles[1].id == 2);
  CHECK(trace.vehicles[2].id == 1);
  CHECK(trace.vehicles[0].t == 0.0);
  CHECK(trace.vehicles[3].id == 3);
}

TEST_CASE("repeated runs are bit identical") {
  ScenarioConfig cfg = base_config();
  cfg.duration = 8.0;
  cfg.seed = 42;
  const auto [t1, m1] = run_simulation(cfg);
  const auto [t2, m2] = run_simulation(cfg);
  REQUIRE(t1.vehicles.size() == t2.vehicles.size());
  for (size_t i = 0; i < t1.vehicles.size(); ++i) CHECK(rows_equal(t1.vehicles[i], t2.vehicles[i]));
  REQUIRE(t1.cav.size() == t2.cav.size());
  for (size_t i = 0; i < t1.cav.size(); ++i) {
    CHECK(t1.cav[i].e_p == t2.cav[i].e_p);
    CHECK(t1.cav[i].e_v == t2.cav[i].e_v);
    CHECK(t1.cav[i].slack == t2.cav[i].slack);
    CHECK(t1.cav[i].solver_status == t2.cav[i].solver_status);
  }
  REQUIRE(t1.estimates.size() == t2.estimates.size());
  for (size_t i = 0; i < t1.estimates.size(); ++i) {
    CHECK(t1.estimates[i].gamma1 == t2.estimates[i].gamma1);
    CHECK(t1.estimates[i].residual == t2.estimates[i].residual);
  }
  CHECK(t1.events == t2.events);
  CHECK(m1.control_effort == m2.control_effort);
  CHECK(m1.min_bumper_gap == m2.min_bumper_gap);
}

TEST_CASE("different seeds draw different drivers") {
  ScenarioConfig cfg = base_config();
  cfg.duration = 2.0;
  cfg.seed = 1;
  const auto [t1, m1] = run_simulation(cfg);
  cfg.seed = 2;
  const auto [t2, m2] = run_simulation(cfg);
  bool any_difference = false;
  for (size_t i = 0; i < std::min(t1.vehicles.size(), t2.vehicles.size()); ++i)
    if (!rows_equal(t1.vehicles[i], t2.vehicles[i])) any_difference = true;
  CHECK(any_difference);
}

TEST_CASE("the default scenario brakes to a safe standstill") {
  ScenarioConfig cfg = base_config();  // 3 vehicles, seed 1, default window
  const auto [trace, metrics] = run_simulation(cfg);
  CHECK_FALSE(metrics.collision);
  CHECK(metrics.min_bumper_gap > 0.0);
  CHECK(metrics.violation_count == 0);
  CHECK(metrics.all_stopped);
  CHECK(trace.stopped_early);
  CHECK(metrics.end_time < cfg.duration);
  CHECK(metrics.terminal_cav_gap > 2.5);
  CHECK(metrics.terminal_cav_gap < 5.0);
  CHECK(metrics.u_min_seen >= cfg.mpc.limits.u_min - 1e-12);
  CHECK(metrics.u_max_seen <= cfg.mpc.limits.u_max + 1e-12);
  CHECK(metrics.v_min_seen >= 0.0);
  CHECK(metrics.v_max_seen <= cfg.mpc.limits.v_max + 1e-12);
  // Vehicles never cross the stop line.
  for (const auto& row : trace.vehicles) CHECK(row.p < cfg.p0);
}

TEST_CASE("the human-only baseline also settles without contact") {
  ScenarioConfig cfg = base_config();
  cfg.hdv_only = true;
  const auto [trace, metrics] = run_simulation(cfg);
  CHECK_FALSE(metrics.collision);
  CHECK(metrics.min_bumper_gap > 0.0);
  CHECK(metrics.all_stopped);
  CHECK(trace.cav.empty());
  CHECK(trace.estimates.empty());
}

TEST_CASE("an engineered rear-end closure is recorded, not ignored") {
  ScenarioConfig cfg = base_config();
  cfg.n_vehicles = 2;
  cfg.hdv_only = true;
  cfg.duration = 10.0;
  cfg.perturbation = 0.0;
  // Stopped leader two meters ahead of a vehicle arriving at full speed:
  // physically unavoidable contact.
  cfg.init = {{-10.0, 0.0}, {-17.0, 12.0}};
  const auto [trace, metrics] = run_simulation(cfg);
  CHECK(metrics.collision);
  CHECK(trace.collision);
  REQUIRE(trace.collision_gap.has_value());
  CHECK(*trace.collision_gap <= 0.0);
  CHECK(metrics.min_bumper_gap <= 0.0);
  CHECK(trace.steps < 100);  // the run aborts at contact
  bool contact_event = false;
  for (const auto& ev : trace.events)
    if (ev.find("contact") != std::string::npos) contact_event = true;
  CHECK(contact_event);
}

TEST_CASE("a departing predecessor re-binds the platoon without estimator resets") {
  ScenarioConfig cfg = base_config();
  cfg.duration = 12.0;
  cfg.departures = {{5.0, 2}};
  const auto [trace, metrics] = run_simulation(cfg);
  (void)metrics;

  double last_t_id2 = -1.0;
  std::set<double> id3_times_after;
  for (const auto& row : trace.vehicles) {
    if (row.id == 2) last_t_id2 = std::max(last_t_id2, row.t);
    if (row.id == 3 && row.t > 5.05) id3_times_after.insert(row.t);
  }
  CHECK_THAT(last_t_id2, WithinAbs(5.0, 1e-9));
  CHECK(!id3_times_after.empty());  // the platoon keeps its leader

  bool departure_event = false;
  for (const auto& ev : trace.events)
    if (ev.find("departed") != std::string::npos) departure_event = true;
  CHECK(departure_event);
  bool reset_event = false;
  for (const auto& ev : trace.events)
    if (ev.find("reset") != std::string::npos) reset_event = true;
  CHECK_FALSE(reset_event);

  // Estimate rows for vehicle 2 cease after departure; vehicle 3 continues.
  double last_est_id2 = -1.0, last_est_id3 = -1.0;
  for (const auto& row : trace.estimates) {
    if (row.hdv_id == 2) last_est_id2 = std::max(last_est_id2, row.t);
    if (row.hdv_id == 3) last_est_id3 = std::max(last_est_id3, row.t);
  }
  CHECK(last_est_id2 <= 5.0 + 1e-9);
  CHECK(last_est_id3 > 11.0);
}

TEST_CASE("when everybody ahead departs the controller cruises") {
  ScenarioConfig cfg = base_config();
  cfg.n_vehicles = 2;
  cfg.duration = 6.0;
  cfg.departures = {{3.0, 2}};
  const auto [trace, metrics] = run_simulation(cfg);
  CHECK_FALSE(metrics.collision);
  CHECK(trace.steps == 60);  // cruising at speed, no standstill
  for (const auto& row : trace.cav) {
    if (row.t > 3.05) CHECK(row.solver_status == "cruise");
  }
  // Vehicle 1 keeps driving at constant speed after the platoon empties.
  for (const auto& row : trace.vehicles)
    if (row.id == 1 && row.t > 3.05) CHECK(row.u == 0.0);
}

TEST_CASE("zero duration records the initial snapshot") {
  ScenarioConfig cfg = base_config();
  cfg.duration = 0.0;
  const auto [trace, metrics] = run_simulation(cfg);
  CHECK(trace.steps == 0);
  CHECK(trace.vehicles.size() == 3);
  CHECK(trace.cav.size() == 1);
  CHECK(trace.cav[0].solver_status == "none");
  CHECK_THAT(trace.cav[0].e_p, WithinAbs(30.0, 1e-12));
  CHECK(metrics.steps == 0);
  CHECK_FALSE(metrics.all_stopped);  // initial speeds are 12 m/s
}

TEST_CASE("vehicle set updates preserve order and report removals") {
  std::vector<detail::SimVehicle> platoon(4);
  platoon[0].id = 4;
  platoon[0].state.p = 5.0;  // past the line
  platoon[1].id = 3;
  platoon[1].state.p = -10.0;
  platoon[2].id = 2;
  platoon[2].state.p = -30.0;
  platoon[3].id = 1;
  platoon[3].controlled = true;
  platoon[3].state.p = 5.0;  // controlled vehicles are never removed
  const auto removed = update_vehicle_sets(platoon, 0.0, {2});
  REQUIRE(removed.size() == 2);
  CHECK(removed[0] == 4);
  CHECK(removed[1] == 2);
  REQUIRE(platoon.size() == 2);
  CHECK(platoon[0].id == 3);
  CHECK(platoon[1].id == 1);
}

TEST_CASE("configuration validation names the offending key") {
  ScenarioConfig cfg = base_config();
  cfg.n_vehicles = 1;
  CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("n_vehicles"));

  cfg = base_config();
  cfg.perturbation = 1.0;
  CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("perturbation"));

  cfg = base_config();
  cfg.init = {{0.0, 12.0}};
  CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("init_positions"));

  cfg = base_config();
  cfg.init = {{-10.0, 12.0}, {-12.0, 12.0}, {-40.0, 12.0}};  // gap -3 up front
  CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("init_positions"));

  cfg = base_config();
  cfg.init = {{-10.0, 12.0}, {-40.0, 16.0}, {-70.0, 12.0}};
  CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("init_speeds"));

  cfg = base_config();
  cfg.departures = {{1.0, 1}};
  CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("departures"));

  cfg = base_config();
  cfg.rls.xi = 1.5;
  CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("xi"));
}

TEST_CASE("metrics refuse an empty trace") {
  CHECK_THROWS_AS(compute_metrics(SimTrace{}), std::domain_error);
}

TEST_CASE("standstill detection needs a sustained hold") {
  // Both vehicles stopped just short of the line, where the optimal-velocity
  // drive is microscopic: the detector ends the run after exactly the hold
  // window while the creep stays far below the speed threshold.
  ScenarioConfig cfg = base_config();
  cfg.n_vehicles = 2;
  cfg.hdv_only = true;
  cfg.duration = 30.0;
  cfg.perturbation = 0.0;
  cfg.init = {{-0.1, 0.0}, {-5.15, 0.0}};
  const auto [trace, metrics] = run_simulation(cfg);
  CHECK(trace.stopped_early);
  CHECK(metrics.all_stopped);
  // Hold window is 2 s at tau = 0.1: the 20th step completes the streak.
  CHECK(trace.steps == 20);
  CHECK_THAT(metrics.end_time, WithinAbs(2.0, 1e-9));
}
