#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cavmpc/mpc.hpp"
#include "cavmpc/rng.hpp"

namespace cavmpc {

struct VehicleInit {
  double p{0.0};
  double v{0.0};
};

/// Scheduled lane change: the vehicle leaves at the first step boundary at
/// or after `time`.
struct DepartureEvent {
  double time{0.0};
  int vehicle_id{0};
};

/// Full description of one run. Vehicles are numbered back to front: the
/// controlled vehicle is id 1 and drives last, its predecessor is id 2, the
/// platoon leader is id n_vehicles.
struct ScenarioConfig {
  int n_vehicles{3};              ///< total, controlled vehicle included
  std::vector<VehicleInit> init;  ///< front to back; empty selects the default layout
  double p0{0.0};                 ///< stop line position [m]
  double duration{400.0};         ///< [s]; generous because runs end at standstill
  std::uint64_t seed{1};
  double l_c{kDefaultVehicleLength};
  double d_f{100.0};              ///< human driver look-ahead [m]
  double perturbation{0.2};       ///< +/- band applied per driver parameter
  bool hdv_only{false};           ///< baseline: drive vehicle 1 by the human model too
  OvmParams ovm{};                ///< nominal human-driver parameters
  MpcConfig mpc{};
  RlsInit rls{};
  std::vector<DepartureEvent> departures{};

  /// Initial states front to back, either as configured or the default
  /// layout: leader 60 m before the line, 25 m bumper gaps between humans,
  /// 30 m ahead of the controlled vehicle (a gap the headway rule accepts
  /// at the initial speed), everybody at 12 m/s.
  std::vector<VehicleInit> layout() const {
    if (!init.empty()) return init;
    std::vector<VehicleInit> out;
    out.reserve(static_cast<size_t>(n_vehicles));
    const double v0 = std::clamp(12.0, mpc.limits.v_min, mpc.limits.v_max);
    double p = p0 - 60.0;
    for (int i = 0; i < n_vehicles; ++i) {
      if (i > 0) p -= l_c + (i == n_vehicles - 1 ? 30.0 : 25.0);
      out.push_back(VehicleInit{p, v0});
    }
    return out;
  }

  void validate() const {
    if (n_vehicles < 2) throw std::domain_error("n_vehicles: need at least 2");
    if (!(duration >= 0.0)) throw std::domain_error("duration: must be nonnegative");
    if (!(l_c > 0.0)) throw std::domain_error("l_c: must be positive");
    if (!(d_f > 0.0)) throw std::domain_error("d_f: must be positive");
    if (!(perturbation >= 0.0 && perturbation < 1.0))
      throw std::domain_error("perturbation: must be in [0, 1)");
    ovm.validate();
    mpc.validate();
    if (!(rls.xi > 0.0 && rls.xi <= 1.0)) throw std::domain_error("xi: must be in (0, 1]");
    if (!(rls.cov0 > 0.0)) throw std::domain_error("cov0: must be positive");
    if (!init.empty()) {
      if (init.size() != static_cast<size_t>(n_vehicles))
        throw std::domain_error("init_positions: need one entry per vehicle");
      for (size_t i = 0; i < init.size(); ++i) {
        const VehicleInit& vi = init[i];
        if (!std::isfinite(vi.p) || !std::isfinite(vi.v))
          throw std::domain_error("init_positions: non-finite entry");
        if (vi.v < mpc.limits.v_min || vi.v > mpc.limits.v_max)
          throw std::domain_error("init_speeds: outside [v_min, v_max]");
        if (i > 0 && !(init[i - 1].p - vi.p - l_c > 0.0))
          throw std::domain_error("init_positions: initial gaps must be positive");
      }
    }
    for (const DepartureEvent& ev : departures) {
      if (!(ev.time >= 0.0)) throw std::domain_error("departures: negative time");
      if (ev.vehicle_id < 2 || ev.vehicle_id > n_vehicles)
        throw std::domain_error("departures: id must name a preceding vehicle");
    }
  }
};

/// One trajectory sample: state at time t and the input realized over the
/// following step. delta_p/delta_v record what the vehicle reacted to
/// (predecessor, stop line, or open road).
struct VehicleRow {
  double t{0.0};
  int id{0};
  double p{0.0};
  double v{0.0};
  double u{0.0};
  double delta_p{0.0};
  double delta_v{0.0};
};

/// One controller sample per step.
struct CavRow {
  double t{0.0};
  double e_p{0.0};
  double e_v{0.0};
  double s1{0.0};  ///< required headway at the current speed
  double slack{0.0};
  std::string solver_status{"none"};
  double solve_time{0.0};  ///< wall seconds; excluded from determinism checks
};

/// One estimator sample per preceding vehicle per step: fitted
/// coefficients, the parameters the controller actually used, and the
/// one-step prediction residual.
struct EstimateRow {
  double t{0.0};
  int hdv_id{0};
  double gamma1{0.0}, gamma2{0.0}, gamma3{0.0};
  double eta{0.0}, nu{0.0}, rho{0.0};
  double residual{0.0};
};

struct SimTrace {
  std::vector<VehicleRow> vehicles;  ///< per step, front-to-back blocks
  std::vector<CavRow> cav;
  std::vector<EstimateRow> estimates;
  std::vector<std::string> events;
  bool collision{false};
  std::optional<double> collision_gap;  ///< the offending gap, if any
  double end_time{0.0};
  int steps{0};
  bool stopped_early{false};  ///< standstill detector ended the run
  double tau{0.1};            ///< carried so the trace is self-describing
  double l_c{kDefaultVehicleLength};
};

struct Metrics {
  bool collision{false};
  double min_margin{0.0};      ///< min over time of e_p - required headway
  double min_bumper_gap{0.0};  ///< min adjacent gap anywhere in the run
  int violation_count{0};      ///< steps with slack above the hard threshold
  double max_slack{0.0};
  double control_effort{0.0};  ///< sum of u^2 tau for vehicle 1
  double terminal_cav_gap{0.0};
  bool all_stopped{false};
  double end_time{0.0};
  int steps{0};
  double v_min_seen{0.0}, v_max_seen{0.0};
  double u_min_seen{0.0}, u_max_seen{0.0};
  std::vector<std::pair<int, double>> terminal_speeds;  ///< by vehicle id
  std::vector<std::pair<int, double>> max_abs_u;        ///< by vehicle id
  double solve_ms_median{0.0};
  double solve_ms_p95{0.0};
};

/// Slack above this counts as a hard safety violation.
inline constexpr double kSlackViolationThreshold = 1e-3;

/// Standstill detection: every speed below this for kStopHoldSeconds.
inline constexpr double kStopSpeedThreshold = 0.01;
inline constexpr double kStopHoldSeconds = 2.0;

namespace detail {

struct SimVehicle {
  int id{0};
  bool controlled{false};
  VehicleState state{};
  OvmParams ovm{};
};

inline double percentile_nearest_rank(std::vector<double> v, double pct) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t rank = static_cast<size_t>(
      std::max(1.0, std::ceil(pct / 100.0 * static_cast<double>(v.size()))));
  return v[std::min(rank, v.size()) - 1];
}

}  // namespace detail

/// Removes vehicles that crossed the stop line or whose ids are listed in
/// `departing`. The remaining order is preserved, which is what re-derives
/// everybody's predecessor. Returns the removed ids front to back.
inline std::vector<int> update_vehicle_sets(std::vector<detail::SimVehicle>& platoon, double p0,
                                            const std::vector<int>& departing) {
  std::vector<int> removed;
  for (auto it = platoon.begin(); it != platoon.end();) {
    const bool past_line = !it->controlled && it->state.p > p0;
    const bool departs =
        std::find(departing.begin(), departing.end(), it->id) != departing.end();
    if (past_line || departs) {
      removed.push_back(it->id);
      it = platoon.erase(it);
    } else {
      ++it;
    }
  }
  return removed;
}

/// Aggregates a finished trace. Adjacent gaps are reconstructed from the
/// per-step position blocks, so the numbers cannot drift from what was
/// actually simulated. Throws on an empty trace.
inline Metrics compute_metrics(const SimTrace& trace) {
  if (trace.vehicles.empty()) throw std::domain_error("compute_metrics: empty trace");
  Metrics m;
  m.collision = trace.collision;
  m.end_time = trace.end_time;
  m.steps = trace.steps;

  double min_gap = std::numeric_limits<double>::infinity();
  m.v_min_seen = std::numeric_limits<double>::infinity();
  m.v_max_seen = -std::numeric_limits<double>::infinity();
  m.u_min_seen = std::numeric_limits<double>::infinity();
  m.u_max_seen = -std::numeric_limits<double>::infinity();
  std::unordered_map<int, double> terminal_v, max_u;
  for (size_t i = 0; i < trace.vehicles.size(); ++i) {
    const VehicleRow& row = trace.vehicles[i];
    if (i > 0 && trace.vehicles[i - 1].t == row.t)
      min_gap = std::min(min_gap, trace.vehicles[i - 1].p - row.p - trace.l_c);
    m.v_min_seen = std::min(m.v_min_seen, row.v);
    m.v_max_seen = std::max(m.v_max_seen, row.v);
    m.u_min_seen = std::min(m.u_min_seen, row.u);
    m.u_max_seen = std::max(m.u_max_seen, row.u);
    if (row.id == 1) m.control_effort += row.u * row.u * trace.tau;
    terminal_v[row.id] = row.v;
    auto [it, inserted] = max_u.emplace(row.id, std::abs(row.u));
    if (!inserted) it->second = std::max(it->second, std::abs(row.u));
  }
  if (trace.collision_gap) min_gap = std::min(min_gap, *trace.collision_gap);
  m.min_bumper_gap = min_gap;

  m.min_margin = std::numeric_limits<double>::infinity();
  std::vector<double> solve_ms;
  for (const CavRow& row : trace.cav) {
    if (row.solver_status == "none") continue;
    m.max_slack = std::max(m.max_slack, row.slack);
    if (row.slack > kSlackViolationThreshold) ++m.violation_count;
    if (row.solver_status == "cruise") continue;
    m.min_margin = std::min(m.min_margin, row.e_p - row.s1);
    solve_ms.push_back(row.solve_time * 1e3);
  }
  if (!trace.cav.empty()) m.terminal_cav_gap = trace.cav.back().e_p;

  std::vector<int> ids;
  ids.reserve(terminal_v.size());
  for (const auto& [id, v] : terminal_v) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  m.all_stopped = true;
  for (int id : ids) {
    m.terminal_speeds.emplace_back(id, terminal_v[id]);
    m.max_abs_u.emplace_back(id, max_u[id]);
    if (terminal_v[id] > kStopSpeedThreshold) m.all_stopped = false;
  }
  m.solve_ms_median = detail::percentile_nearest_rank(solve_ms, 50.0);
  m.solve_ms_p95 = detail::percentile_nearest_rank(solve_ms, 95.0);
  return m;
}

/// Runs one closed-loop scenario: synchronous steps in which human drivers
/// commit to reactions from time-t states, the controller updates its
/// estimators with the newest measurements and solves its program,
/// everybody advances under the shared dynamics, then departures and line
/// crossings update the platoon. Ends at the configured duration, at
/// sustained standstill, or on contact between adjacent vehicles
/// (recorded, never silently ignored).
inline std::pair<SimTrace, Metrics> run_simulation(const ScenarioConfig& config) {
  config.validate();
  const Limits& lim = config.mpc.limits;
  const double tau = lim.tau;

  std::vector<detail::SimVehicle> platoon;
  const std::vector<VehicleInit> layout = config.layout();
  for (int i = 0; i < config.n_vehicles; ++i) {
    detail::SimVehicle veh;
    veh.id = config.n_vehicles - i;
    veh.controlled = (veh.id == 1) && !config.hdv_only;
    veh.state =
        VehicleState{layout[static_cast<size_t>(i)].p, layout[static_cast<size_t>(i)].v, 0.0};
    if (!veh.controlled)
      veh.ovm = perturb_params(config.ovm, config.perturbation,
                               derive_seed(config.seed, static_cast<std::uint64_t>(veh.id)));
    platoon.push_back(veh);
  }

  MpcController controller(config.mpc);
  std::unordered_map<int, RlsState> estimators;
  std::unordered_map<int, Regressor> prev_regressor;
  std::unordered_map<int, double> last_residual;

  SimTrace trace;
  trace.tau = tau;
  trace.l_c = config.l_c;
  const int steps = static_cast<int>(std::llround(config.duration / tau));
  const int stop_hold = std::max(1, static_cast<int>(std::ceil(kStopHoldSeconds / tau)));
  int stop_streak = 0;

  const auto log_event = [&trace](std::string msg) { trace.events.push_back(std::move(msg)); };

  if (steps == 0) {
    // Degenerate run: record the initial snapshot only.
    for (size_t i = 0; i < platoon.size(); ++i) {
      const detail::SimVehicle& veh = platoon[i];
      const VehicleState* pred = (i > 0) ? &platoon[i - 1].state : nullptr;
      const NeighborObservation obs =
          observe_neighbor(veh.state, pred, true, config.p0, config.l_c, config.d_f);
      trace.vehicles.push_back(
          VehicleRow{0.0, veh.id, veh.state.p, veh.state.v, 0.0, obs.delta_p, obs.delta_v});
      if (veh.controlled) {
        CavRow crow;
        if (i > 0) {
          const GapState gap = gap_states(veh.state, platoon[i - 1].state, config.l_c);
          crow.e_p = gap.e_p;
          crow.e_v = gap.e_v;
        }
        crow.s1 = safe_headway(veh.state.v, config.mpc.policy);
        trace.cav.push_back(crow);
      }
    }
    return {trace, compute_metrics(trace)};
  }

  for (int k = 0; k < steps; ++k) {
    const double t = k * tau;

    // Human drivers commit to their accelerations from time-t states.
    std::vector<double> inputs(platoon.size(), 0.0);
    std::vector<NeighborObservation> observations(platoon.size());
    size_t cav_index = platoon.size();
    for (size_t i = 0; i < platoon.size(); ++i) {
      const detail::SimVehicle& veh = platoon[i];
      const VehicleState* pred = (i > 0) ? &platoon[i - 1].state : nullptr;
      observations[i] =
          observe_neighbor(veh.state, pred, true, config.p0, config.l_c, config.d_f);
      if (veh.controlled) {
        cav_index = i;
      } else {
        inputs[i] = ovm_accel(veh.ovm, observations[i], veh.state.v, lim);
      }
    }

    // Controller turn: newest measurements update the estimators, then one
    // receding-horizon solve.
    if (cav_index < platoon.size()) {
      const detail::SimVehicle& cav = platoon[cav_index];
      std::vector<PlatoonVehicle> ahead;
      for (size_t i = 0; i < cav_index; ++i)
        ahead.push_back(PlatoonVehicle{platoon[i].id, platoon[i].state});

      for (size_t i = 0; i < cav_index; ++i) {
        const int id = platoon[i].id;
        auto est = estimators.find(id);
        if (est == estimators.end())
          est = estimators.emplace(id, initial_rls_state(config.rls)).first;
        const auto reg = prev_regressor.find(id);
        if (reg != prev_regressor.end()) {
          const int resets_before = est->second.reset_count;
          auto [next, residual] = rls_update(est->second, reg->second, platoon[i].state.v);
          if (next.reset_count != resets_before)
            log_event("t=" + std::to_string(t) + " estimator reset for vehicle " +
                      std::to_string(id));
          est->second = next;
          last_residual[id] = residual;
        }
      }

      const MpcStepResult result = controller.step(cav.state, ahead, estimators, config.p0);
      inputs[cav_index] = result.u;

      CavRow crow;
      crow.t = t;
      if (!ahead.empty()) {
        const GapState gap = gap_states(cav.state, platoon[cav_index - 1].state, config.l_c);
        crow.e_p = gap.e_p;
        crow.e_v = gap.e_v;
      }
      crow.s1 = safe_headway(cav.state.v, config.mpc.policy);
      crow.slack = result.diagnostics.slack_max;
      crow.solver_status = result.diagnostics.status_string();
      crow.solve_time = result.diagnostics.solve_seconds;
      trace.cav.push_back(crow);

      for (const auto& [id, used] : result.params_used) {
        const RlsState& est = estimators.at(id);
        EstimateRow erow;
        erow.t = t;
        erow.hdv_id = id;
        erow.gamma1 = est.gamma_hat(0);
        erow.gamma2 = est.gamma_hat(1);
        erow.gamma3 = est.gamma_hat(2);
        erow.eta = used.eta;
        erow.nu = used.nu;
        erow.rho = used.rho;
        const auto res = last_residual.find(id);
        erow.residual = (res != last_residual.end()) ? res->second : 0.0;
        trace.estimates.push_back(erow);
      }

      // Regressors for the next update. The implied predecessor speed
      // delta_v + v is consistent across all three observation cases
      // (actual predecessor, standstill line, same-speed phantom).
      for (size_t i = 0; i < cav_index; ++i)
        prev_regressor.insert_or_assign(
            platoon[i].id,
            make_regressor(platoon[i].state.v, observations[i].delta_p,
                           observations[i].delta_v + platoon[i].state.v));
    }

    // Advance everybody synchronously and log the realized inputs.
    for (size_t i = 0; i < platoon.size(); ++i) {
      const VehicleState before = platoon[i].state;
      const VehicleState after = step_dynamics(before, inputs[i], lim);
      trace.vehicles.push_back(VehicleRow{t, platoon[i].id, before.p, before.v, after.u,
                                          observations[i].delta_p, observations[i].delta_v});
      platoon[i].state = after;
    }
    trace.steps = k + 1;
    trace.end_time = (k + 1) * tau;

    // Contact check on the advanced states.
    for (size_t i = 1; i < platoon.size(); ++i) {
      const double gap = platoon[i - 1].state.p - platoon[i].state.p - config.l_c;
      if (gap <= 0.0) {
        trace.collision = true;
        trace.collision_gap = trace.collision_gap ? std::min(*trace.collision_gap, gap) : gap;
        log_event("t=" + std::to_string((k + 1) * tau) + " contact between vehicle " +
                  std::to_string(platoon[i - 1].id) + " and vehicle " +
                  std::to_string(platoon[i].id));
      }
    }
    if (trace.collision) break;

    // Set updates take effect from the next step.
    std::vector<int> departing;
    for (const DepartureEvent& ev : config.departures)
      if (ev.time >= t && ev.time < t + tau) departing.push_back(ev.vehicle_id);
    const std::vector<int> removed = update_vehicle_sets(platoon, config.p0, departing);
    for (int id : removed) {
      prev_regressor.erase(id);
      const bool departed =
          std::find(departing.begin(), departing.end(), id) != departing.end();
      log_event("t=" + std::to_string((k + 1) * tau) + " vehicle " + std::to_string(id) +
                (departed ? " departed the lane" : " passed the stop line"));
    }

    // Sustained standstill ends the run early.
    bool all_slow = true;
    for (const detail::SimVehicle& veh : platoon)
      if (veh.state.v >= kStopSpeedThreshold) all_slow = false;
    stop_streak = all_slow ? stop_streak + 1 : 0;
    if (stop_streak >= stop_hold) {
      trace.stopped_early = true;
      log_event("t=" + std::to_string((k + 1) * tau) + " platoon at standstill, run complete");
      break;
    }
  }

  return {trace, compute_metrics(trace)};
}

}  // namespace cavmpc
