#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cavmpc {

/// Default bumper-to-bumper vehicle length [m].
inline constexpr double kDefaultVehicleLength = 5.0;

/// Longitudinal state of one vehicle at a sampling instant. Positions grow
/// in the driving direction; the stop line sits at a fixed position
/// downstream, so a vehicle approaching it has p below that position.
struct VehicleState {
  double p{0.0};  ///< position [m]
  double v{0.0};  ///< speed [m/s]
  double u{0.0};  ///< acceleration realized over the preceding step [m/s^2]
};

/// Actuation and speed envelope shared by every vehicle, plus the sampling
/// time of the synchronous update.
struct Limits {
  double u_min{-5.0};  ///< strongest braking [m/s^2]
  double u_max{3.0};   ///< strongest acceleration [m/s^2]
  double v_min{0.0};   ///< speed floor [m/s]; no reversing
  double v_max{15.0};  ///< speed cap [m/s]
  double tau{0.1};     ///< sampling time [s]

  void validate() const {
    if (!(u_min < 0.0) || !(u_max > 0.0))
      throw std::domain_error("Limits: need u_min < 0 < u_max");
    if (!(v_min >= 0.0) || !(v_min < v_max))
      throw std::domain_error("Limits: need 0 <= v_min < v_max");
    if (!(tau > 0.0)) throw std::domain_error("Limits: need tau > 0");
  }
};

/// Relative state of a follower with respect to its immediate predecessor.
struct GapState {
  double e_p{0.0};  ///< bumper-to-bumper gap [m]; <= 0 means contact
  double e_v{0.0};  ///< predecessor speed minus own speed [m/s]
};

/// Speed-dependent minimum-gap rule: hold rho seconds of travel plus s_0
/// meters of standstill clearance.
struct HeadwayPolicy {
  double rho{2.0};  ///< time headway [s]
  double s_0{3.0};  ///< standstill clearance [m]

  void validate() const {
    if (!(rho > 0.0)) throw std::domain_error("HeadwayPolicy: need rho > 0");
    if (!(s_0 > 0.0)) throw std::domain_error("HeadwayPolicy: need s_0 > 0");
  }
};

/// Advances one vehicle by one step under piecewise-constant acceleration.
///
/// The input is clamped to [u_min, u_max] first. If the speed update would
/// leave [v_min, v_max], the input is re-clamped to the value that lands
/// exactly on the bound; the state records that effective input, so the
/// recorded u is always admissible and consistent with the speed change.
inline VehicleState step_dynamics(const VehicleState& state, double u, const Limits& limits) {
  if (!std::isfinite(state.p) || !std::isfinite(state.v) || !std::isfinite(u))
    throw std::domain_error("step_dynamics: non-finite input");
  const double tau = limits.tau;
  double ue = std::clamp(u, limits.u_min, limits.u_max);
  double v_next = state.v + ue * tau;
  if (v_next > limits.v_max) {
    ue = (limits.v_max - state.v) / tau;
    v_next = limits.v_max;
  } else if (v_next < limits.v_min) {
    ue = (limits.v_min - state.v) / tau;
    v_next = limits.v_min;
  }
  VehicleState next;
  next.p = state.p + state.v * tau + 0.5 * ue * tau * tau;
  next.v = v_next;
  next.u = ue;
  return next;
}

/// Minimum safe bumper gap at speed v.
inline double safe_headway(double v, const HeadwayPolicy& policy) {
  if (!(v >= 0.0)) throw std::domain_error("safe_headway: negative speed");
  return policy.rho * v + policy.s_0;
}

/// Gap and approach rate of `follower` behind `leader`. l_c is the leader's
/// occupied length, so e_p is bumper to bumper.
inline GapState gap_states(const VehicleState& follower, const VehicleState& leader, double l_c) {
  return GapState{leader.p - follower.p - l_c, leader.v - follower.v};
}

/// True iff the gap satisfies the headway rule at the follower's speed.
inline bool is_safe(const GapState& gap, double follower_v, const HeadwayPolicy& policy) {
  return gap.e_p >= safe_headway(follower_v, policy);
}

}  // namespace cavmpc
