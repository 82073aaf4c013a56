#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "cavmpc/rng.hpp"
#include "cavmpc/vehicle.hpp"

namespace cavmpc {

/// Optimal-velocity car-following parameters. These drive the simulated
/// human vehicles; the controller never sees them.
struct OvmParams {
  double alpha{0.8};  ///< gain on speed error [1/s]
  double beta{0.6};   ///< gain on approach rate [1/s]
  double v_d{15.0};   ///< desired free-flow speed [m/s]
  double rho{2.0};    ///< time headway [s]
  double s_0{5.0};    ///< standstill clearance [m]

  void validate() const {
    if (!(alpha > 0.0) || !(beta >= 0.0))
      throw std::domain_error("OvmParams: need alpha > 0 and beta >= 0");
    if (!(v_d > 0.0)) throw std::domain_error("OvmParams: need v_d > 0");
    if (!(rho > 0.0) || !(s_0 > 0.0))
      throw std::domain_error("OvmParams: need rho > 0 and s_0 > 0");
  }
};

/// Linear constant-time-headway relative-velocity parameters, the model the
/// controller fits online and rolls forward.
struct CthRvParams {
  double eta{1.0};  ///< gain on headway error [1/s]
  double nu{1.8};   ///< gain on approach rate [1/s]
  double rho{1.5};  ///< time headway [s]
};

/// What a driver reacts to: distance to and closing speed of whatever is
/// immediately ahead.
struct NeighborObservation {
  double delta_p{0.0};  ///< headway [m]
  double delta_v{0.0};  ///< predecessor speed minus own speed [m/s]
};

/// Resolves what is "ahead" of a vehicle within the look-ahead range d_f:
/// the predecessor's rear bumper if close enough, else an active stop line
/// (a standstill obstruction, so delta_v = -v), else open road, which reads
/// as a phantom neighbor at d_f moving at the same speed.
inline NeighborObservation observe_neighbor(const VehicleState& ego,
                                            const VehicleState* predecessor,
                                            bool stop_line_active,
                                            double stop_line_pos,
                                            double l_c,
                                            double d_f) {
  if (!(d_f > 0.0)) throw std::domain_error("observe_neighbor: need d_f > 0");
  double best = d_f;
  int kind = 0;  // 0 open road, 1 predecessor, 2 stop line
  if (predecessor != nullptr) {
    const double gap = predecessor->p - ego.p - l_c;
    if (gap <= best) {
      best = gap;
      kind = 1;
    }
  }
  if (stop_line_active) {
    const double d_s = stop_line_pos - ego.p;
    if (d_s >= 0.0 && d_s < best) {
      best = d_s;
      kind = 2;
    }
  }
  switch (kind) {
    case 1:
      return NeighborObservation{best, predecessor->v - ego.v};
    case 2:
      return NeighborObservation{best, -ego.v};
    default:
      return NeighborObservation{d_f, 0.0};
  }
}

/// Optimal-velocity acceleration response, clamped to the actuation range.
/// The desired speed profile saturates through tanh around the dynamic
/// headway s = rho * v + s_0, so it is bounded by v_d for any gap.
inline double ovm_accel(const OvmParams& params, const NeighborObservation& obs, double v,
                        const Limits& limits) {
  const double s = params.rho * v + params.s_0;
  const double v_opt = 0.5 * params.v_d * (std::tanh(obs.delta_p - s) + std::tanh(s));
  const double u = params.alpha * (v_opt - v) + params.beta * obs.delta_v;
  return std::clamp(u, limits.u_min, limits.u_max);
}

/// One-step speed update of the linear car-following model:
///   v' = v + eta * (delta_p - rho * v) * tau + nu * (v_pred - v) * tau.
/// Affine in (v, delta_p, v_pred); the fitted coefficients of exactly this
/// map are what the estimator recovers.
inline double cthrv_speed_next(const CthRvParams& params, double v, double delta_p, double v_pred,
                               double tau) {
  return v + params.eta * (delta_p - params.rho * v) * tau + params.nu * (v_pred - v) * tau;
}

/// Same update clamped to the admissible speed range.
inline double cthrv_speed_next(const CthRvParams& params, double v, double delta_p, double v_pred,
                               double tau, const Limits& limits) {
  return std::clamp(cthrv_speed_next(params, v, delta_p, v_pred, tau), limits.v_min, limits.v_max);
}

/// Independently draws each field of `nominal` from a uniform band of
/// +/- fraction around its value. Same seed, same draw, bit for bit.
inline OvmParams perturb_params(const OvmParams& nominal, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw std::domain_error("perturb_params: fraction must be in [0, 1)");
  SplitMix64 rng(seed);
  const auto scale = [&rng, fraction](double x) {
    return x * rng.uniform(1.0 - fraction, 1.0 + fraction);
  };
  OvmParams out;
  out.alpha = scale(nominal.alpha);
  out.beta = scale(nominal.beta);
  out.v_d = scale(nominal.v_d);
  out.rho = scale(nominal.rho);
  out.s_0 = scale(nominal.s_0);
  return out;
}

}  // namespace cavmpc
