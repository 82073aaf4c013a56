#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "cavmpc/hdv_model.hpp"
#include "cavmpc/vehicle.hpp"

namespace cavmpc {

/// Predicted trajectory of one vehicle over the horizon. Index 0 holds the
/// measured current state; entry n is the state n steps ahead.
struct HdvPrediction {
  std::vector<double> positions;  ///< [m], horizon + 1 entries
  std::vector<double> speeds;     ///< [m/s], horizon + 1 entries
  bool collision_predicted{false};
};

/// Rolls the fitted car-following models over the horizon, chaining front
/// to back. The leading vehicle reacts to the stop line shifted back by
/// stop_margin with a standstill target speed, so the modeled platoon
/// settles behind the line; every follower reacts to the vehicle ahead.
///
/// Speeds clamp to [0, v_max] and positions integrate the current-step
/// speed, so predicted positions never decrease. A follower's speed is
/// additionally capped so its predicted gap cannot go below zero; when that
/// cap bites, or measured states already imply contact one step out, the
/// vehicle's prediction is flagged and the gap floors at zero.
inline std::vector<HdvPrediction> predict_platoon(const std::vector<VehicleState>& hdv_states,
                                                  const std::vector<CthRvParams>& params,
                                                  double stop_line_pos, double stop_margin,
                                                  double l_c, int horizon, double tau,
                                                  const Limits& limits) {
  if (hdv_states.size() != params.size())
    throw std::invalid_argument("predict_platoon: one parameter set per vehicle");
  if (horizon < 0) throw std::invalid_argument("predict_platoon: negative horizon");
  if (!(tau > 0.0)) throw std::invalid_argument("predict_platoon: need tau > 0");

  const size_t count = hdv_states.size();
  std::vector<HdvPrediction> preds(count);
  for (size_t i = 0; i < count; ++i) {
    preds[i].positions.reserve(static_cast<size_t>(horizon) + 1);
    preds[i].speeds.reserve(static_cast<size_t>(horizon) + 1);
    preds[i].positions.push_back(hdv_states[i].p);
    preds[i].speeds.push_back(hdv_states[i].v);
  }

  for (int n = 0; n < horizon; ++n) {
    const size_t sn = static_cast<size_t>(n);
    for (size_t i = 0; i < count; ++i)
      preds[i].positions.push_back(preds[i].positions[sn] + preds[i].speeds[sn] * tau);

    for (size_t i = 0; i < count; ++i) {
      const double v = preds[i].speeds[sn];
      double v_next;
      if (i == 0) {
        const double dp = (stop_line_pos - preds[0].positions[sn]) - stop_margin;
        v_next = cthrv_speed_next(params[0], v, dp, 0.0, tau);
      } else {
        const double dp = preds[i - 1].positions[sn] - preds[i].positions[sn] - l_c;
        v_next = cthrv_speed_next(params[i], v, dp, preds[i - 1].speeds[sn], tau);
      }
      v_next = std::clamp(v_next, 0.0, limits.v_max);

      if (i > 0) {
        // Gap at n+1 is already fixed by the stage-n speeds; only the
        // measured stage can have driven it negative.
        double gap_next =
            preds[i - 1].positions[sn + 1] - preds[i].positions[sn + 1] - l_c;
        if (gap_next < 0.0) {
          preds[i].collision_predicted = true;
          preds[i].positions[sn + 1] = preds[i - 1].positions[sn + 1] - l_c;
          gap_next = 0.0;
        }
        // Cap so the gap one further step out stays nonnegative.
        const double cap = preds[i - 1].speeds[sn + 1] + gap_next / tau;
        if (v_next > cap) {
          preds[i].collision_predicted = true;
          v_next = std::max(0.0, cap);
        }
      }
      preds[i].speeds.push_back(v_next);
    }
  }
  return preds;
}

/// The trajectory the controller tracks: its immediate predecessor, the
/// last vehicle of the preceding platoon.
inline const HdvPrediction& hdv2_reference_trajectory(const std::vector<HdvPrediction>& preds) {
  if (preds.empty())
    throw std::domain_error("hdv2_reference_trajectory: no preceding vehicles");
  return preds.back();
}

}  // namespace cavmpc
