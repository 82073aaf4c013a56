#pragma once

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cavmpc/prediction.hpp"
#include "cavmpc/qp.hpp"
#include "cavmpc/rls.hpp"
#include "cavmpc/vehicle.hpp"

namespace cavmpc {

struct MpcWeights {
  double w_ep{1.0};     ///< gap tracking
  double w_ev{0.1};     ///< relative speed
  double w_u{1.0};      ///< control effort
  double w_slack{1e6};  ///< safety slack penalty

  void validate() const {
    if (w_ep < 0.0 || w_ev < 0.0 || w_u < 0.0)
      throw std::domain_error("MpcWeights: negative weight");
    if (!(w_ep > 0.0 || w_ev > 0.0 || w_u > 0.0))
      throw std::domain_error("MpcWeights: all stage weights zero");
    if (!(w_slack > 0.0)) throw std::domain_error("MpcWeights: need w_slack > 0");
  }
};

struct MpcConfig {
  int horizon{50};         ///< prediction steps
  HeadwayPolicy policy{};  ///< controller-side headway rule
  double l_c{kDefaultVehicleLength};
  Limits limits{};
  MpcWeights weights{};
  double qp_tol{1e-6};
  int qp_max_iter{4000};

  void validate() const {
    if (horizon < 1) throw std::domain_error("MpcConfig: need horizon >= 1");
    if (!(l_c > 0.0)) throw std::domain_error("MpcConfig: need l_c > 0");
    policy.validate();
    limits.validate();
    weights.validate();
    if (!(qp_tol > 0.0) || qp_max_iter < 1)
      throw std::domain_error("MpcConfig: bad solver settings");
  }
};

/// Condensed program over x = [u(0..T-1), sigma(1..T)] plus the affine maps
/// that recover the tracked quantities from x. The exact input-to-state
/// maps are kept so tests can reconstruct trajectories without re-deriving
/// them.
struct CondensedQp {
  QpProblem problem;
  Eigen::MatrixXd ep_lin;      ///< e_p(1..T) = ep_const + ep_lin * x
  Eigen::VectorXd ep_const;
  Eigen::MatrixXd ev_lin;      ///< e_v(1..T) = ev_const + ev_lin * x
  Eigen::VectorXd ev_const;
  Eigen::MatrixXd margin_lin;  ///< e_p - (rho v + s_0), same shape
  Eigen::VectorXd margin_const;
  int horizon{0};
};

/// Builds the receding-horizon program for one control step.
///
/// Stage costs over n = 1..T weight the gap error against the
/// speed-dependent reference rho*v(n) + s_0, the relative speed against the
/// predicted predecessor, and the inputs; the safety constraint
/// e_p(n) >= rho*v(n) + s_0 - sigma_n is softened by per-stage slacks with
/// a quadratic penalty (w_slack, no 1/2 factor). Speed bounds are exact
/// rows, input bounds are box bounds, slacks are nonnegative. Because the
/// reference moves with the decision variable, both cost and constraint
/// share the same affine margin map.
inline CondensedQp build_qp(const VehicleState& cav, const HdvPrediction& hdv2_pred,
                            const MpcConfig& config) {
  config.validate();
  const int T = config.horizon;
  if (hdv2_pred.positions.size() != static_cast<size_t>(T) + 1 ||
      hdv2_pred.speeds.size() != static_cast<size_t>(T) + 1)
    throw std::invalid_argument("build_qp: prediction must cover horizon + 1 stages");
  const Limits& lim = config.limits;
  if (!std::isfinite(cav.p) || !(cav.v >= lim.v_min - 1e-9 && cav.v <= lim.v_max + 1e-9))
    throw std::domain_error("build_qp: CAV state outside the admissible envelope");

  const double tau = lim.tau;
  const double rho = config.policy.rho, s0 = config.policy.s_0;
  const double inf = std::numeric_limits<double>::infinity();

  // Cumulative maps: v(n) = v0 + (Sv u)(n), p(n) = p0 + n tau v0 + (Sp u)(n).
  Eigen::MatrixXd Sv = Eigen::MatrixXd::Zero(T, T);
  Eigen::MatrixXd Sp = Eigen::MatrixXd::Zero(T, T);
  for (int nn = 1; nn <= T; ++nn)
    for (int k = 0; k < nn; ++k) {
      Sv(nn - 1, k) = tau;
      Sp(nn - 1, k) = tau * tau * (static_cast<double>(nn - k) - 0.5);
    }

  Eigen::VectorXd ep_const(T), ev_const(T);
  for (int nn = 1; nn <= T; ++nn) {
    ep_const(nn - 1) =
        hdv2_pred.positions[static_cast<size_t>(nn)] - (cav.p + nn * tau * cav.v) - config.l_c;
    ev_const(nn - 1) = hdv2_pred.speeds[static_cast<size_t>(nn)] - cav.v;
  }
  const Eigen::VectorXd margin_const =
      ep_const - Eigen::VectorXd::Constant(T, rho * cav.v + s0);
  const Eigen::MatrixXd Mz = Sp + rho * Sv;

  const int nx = 2 * T;
  CondensedQp out;
  out.horizon = T;
  out.ep_lin = Eigen::MatrixXd::Zero(T, nx);
  out.ep_lin.leftCols(T) = -Sp;
  out.ep_const = ep_const;
  out.ev_lin = Eigen::MatrixXd::Zero(T, nx);
  out.ev_lin.leftCols(T) = -Sv;
  out.ev_const = ev_const;
  out.margin_lin = Eigen::MatrixXd::Zero(T, nx);
  out.margin_lin.leftCols(T) = -Mz;
  out.margin_const = margin_const;

  const MpcWeights& w = config.weights;
  QpProblem& qp = out.problem;
  qp.H = Eigen::MatrixXd::Zero(nx, nx);
  qp.H.topLeftCorner(T, T) =
      w.w_ep * Mz.transpose() * Mz + w.w_ev * Sv.transpose() * Sv;
  qp.H.topLeftCorner(T, T).diagonal().array() += w.w_u;
  qp.H.bottomRightCorner(T, T).diagonal().setConstant(2.0 * w.w_slack);
  qp.f = Eigen::VectorXd::Zero(nx);
  qp.f.head(T) = -(w.w_ep * Mz.transpose() * margin_const + w.w_ev * Sv.transpose() * ev_const);

  qp.A = Eigen::MatrixXd::Zero(3 * T, nx);
  qp.b = Eigen::VectorXd(3 * T);
  qp.A.block(0, 0, T, T) = Sv;                               // v(n) <= v_max
  qp.b.head(T).setConstant(lim.v_max - cav.v);
  qp.A.block(T, 0, T, T) = -Sv;                              // v(n) >= v_min
  qp.b.segment(T, T).setConstant(cav.v - lim.v_min);
  qp.A.block(2 * T, 0, T, T) = Mz;                           // margin + sigma >= 0
  qp.A.block(2 * T, T, T, T) = -Eigen::MatrixXd::Identity(T, T);
  qp.b.tail(T) = margin_const;

  qp.lb = Eigen::VectorXd::Constant(nx, 0.0);
  qp.lb.head(T).setConstant(lim.u_min);
  qp.ub = Eigen::VectorXd::Constant(nx, inf);
  qp.ub.head(T).setConstant(lim.u_max);
  return out;
}

/// Strongest comfortable stop when no usable program exists: brake toward
/// standstill at a one-second time constant, never harder than u_min and
/// never through the speed floor.
inline double fallback_brake(const VehicleState& cav, const GapState& gap,
                             const MpcConfig& config) {
  (void)gap;  // severity does not change the reaction, only triggers it
  const Limits& lim = config.limits;
  double u = std::max(lim.u_min, -cav.v);
  u = std::max(u, (lim.v_min - cav.v) / lim.tau);
  return std::min(u, lim.u_max);
}

/// Controller's view of one preceding vehicle.
struct PlatoonVehicle {
  int id{0};
  VehicleState state{};
};

struct MpcDiagnostics {
  QpStatus qp_status{QpStatus::optimal};
  bool cruise_hold{false};       ///< no preceding vehicles, held speed
  bool fallback_used{false};     ///< QP unusable, applied fallback_brake
  bool collision_predicted{false};
  int degenerate_params{0};      ///< estimates that failed inversion this step
  int iterations{0};
  KktResiduals kkt{};
  double slack_max{0.0};
  double solve_seconds{0.0};     ///< wall time of the full control step

  std::string status_string() const {
    if (cruise_hold) return "cruise";
    if (fallback_used) return std::string("fallback_") + to_string(qp_status);
    return to_string(qp_status);
  }
};

struct MpcSolution {
  Eigen::VectorXd u_sequence;     ///< planned inputs, T entries
  std::vector<double> e_p, e_v;   ///< predicted gap and relative speed, stages 1..T
  double slack_max{0.0};
};

struct MpcStepResult {
  double u{0.0};  ///< input to apply this step
  MpcSolution solution;
  MpcDiagnostics diagnostics;
  std::vector<std::pair<int, CthRvParams>> params_used;  ///< per vehicle, front to back
  std::vector<HdvPrediction> predictions;                ///< same order as the platoon
};

/// Receding-horizon controller. Stateless in the physics but remembers the
/// last invertible parameter set per vehicle id and the last active set as
/// a warm-start hint; vehicles keep their estimate history when the platoon
/// ahead changes, new ids start from the estimator's own prior.
class MpcController {
 public:
  explicit MpcController(MpcConfig config) : config_(std::move(config)) { config_.validate(); }

  const MpcConfig& config() const { return config_; }

  void reset() {
    last_params_.clear();
    prev_active_.reset();
  }

  /// One control step. `platoon` lists the vehicles ahead front to back
  /// (immediate predecessor last); `estimators` must hold a state for every
  /// listed id. With an empty platoon the controller holds speed (zero
  /// input), the open-road case where tracking is undefined.
  MpcStepResult step(const VehicleState& cav, const std::vector<PlatoonVehicle>& platoon,
                     const std::unordered_map<int, RlsState>& estimators,
                     double stop_line_pos) {
    const auto t_start = std::chrono::steady_clock::now();
    MpcStepResult out;
    if (platoon.empty()) {
      out.u = 0.0;
      out.diagnostics.cruise_hold = true;
      out.diagnostics.solve_seconds = elapsed_since(t_start);
      return out;
    }

    std::vector<VehicleState> states;
    std::vector<CthRvParams> params;
    states.reserve(platoon.size());
    params.reserve(platoon.size());
    for (const PlatoonVehicle& veh : platoon) {
      const RlsState& est = estimators.at(veh.id);
      CthRvParams cp;
      try {
        cp = gamma_to_cthrv(est.gamma_hat, config_.limits.tau);
        last_params_[veh.id] = cp;
      } catch (const std::domain_error&) {
        ++out.diagnostics.degenerate_params;
        const auto it = last_params_.find(veh.id);
        cp = (it != last_params_.end()) ? it->second
                                        : gamma_to_cthrv(est.init.gamma0, config_.limits.tau);
      }
      states.push_back(veh.state);
      params.push_back(cp);
    }

    out.predictions =
        predict_platoon(states, params, stop_line_pos, config_.policy.s_0, config_.l_c,
                        config_.horizon, config_.limits.tau, config_.limits);
    for (const HdvPrediction& pr : out.predictions)
      out.diagnostics.collision_predicted |= pr.collision_predicted;
    out.params_used.reserve(platoon.size());
    for (size_t i = 0; i < platoon.size(); ++i)
      out.params_used.emplace_back(platoon[i].id, params[i]);

    const CondensedQp cqp = build_qp(cav, out.predictions.back(), config_);
    std::optional<QpWarmStart> warm;
    if (prev_active_) warm = QpWarmStart{*prev_active_};
    const QpSolution qs = solve_qp(cqp.problem, config_.qp_tol, config_.qp_max_iter, warm);

    out.diagnostics.qp_status = qs.status;
    out.diagnostics.iterations = qs.iterations;
    out.diagnostics.kkt = qs.kkt;

    if (qs.status == QpStatus::optimal) {
      const int T = config_.horizon;
      out.solution.u_sequence = qs.x.head(T);
      out.solution.slack_max = std::max(0.0, qs.x.tail(T).maxCoeff());
      out.diagnostics.slack_max = out.solution.slack_max;
      out.solution.e_p.resize(static_cast<size_t>(T));
      out.solution.e_v.resize(static_cast<size_t>(T));
      const Eigen::VectorXd ep = cqp.ep_const + cqp.ep_lin * qs.x;
      const Eigen::VectorXd ev = cqp.ev_const + cqp.ev_lin * qs.x;
      for (int nn = 0; nn < T; ++nn) {
        out.solution.e_p[static_cast<size_t>(nn)] = ep(nn);
        out.solution.e_v[static_cast<size_t>(nn)] = ev(nn);
      }
      out.u = std::clamp(qs.x(0), config_.limits.u_min, config_.limits.u_max);
      prev_active_ = shifted_hint(qs.active_set);
    } else {
      const GapState gap = gap_states(cav, platoon.back().state, config_.l_c);
      out.u = fallback_brake(cav, gap, config_);
      out.diagnostics.fallback_used = true;
      prev_active_.reset();
    }
    out.diagnostics.solve_seconds = elapsed_since(t_start);
    return out;
  }

 private:
  static double elapsed_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  // Active constraints tend to recur one stage earlier on the next solve;
  // hint both the shifted and unshifted ids.
  std::vector<int> shifted_hint(const std::vector<int>& active) const {
    const int T = config_.horizon;
    std::vector<int> hint;
    hint.reserve(active.size() * 2);
    for (int id : active) {
      hint.push_back(id);
      if (id < 3 * T) {  // stage-indexed rows
        if (id % T > 0) hint.push_back(id - 1);
      } else {           // box bounds on u then sigma, also stage-indexed
        const int base = 3 * T;
        if ((id - base) % T > 0) hint.push_back(id - 1);
      }
    }
    return hint;
  }

  MpcConfig config_;
  std::unordered_map<int, CthRvParams> last_params_;
  std::optional<std::vector<int>> prev_active_;
};

}  // namespace cavmpc
