#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "cavmpc/hdv_model.hpp"

namespace cavmpc {

/// Headway coefficients with magnitude at or below this cannot be inverted
/// back to car-following parameters.
inline constexpr double kGammaDegenerate = 1e-6;

/// One input sample for the linear speed-update fit: follower speed, its
/// headway, and the predecessor speed, all taken at the same instant. The
/// speed measured one step later is the regression target.
struct Regressor {
  Eigen::Vector3d phi;
};

inline Regressor make_regressor(double v, double delta_p, double v_pred) {
  if (!std::isfinite(v) || !std::isfinite(delta_p) || !std::isfinite(v_pred))
    throw std::domain_error("make_regressor: non-finite input");
  return Regressor{Eigen::Vector3d(v, delta_p, v_pred)};
}

/// Estimator configuration: prior mean, prior covariance scale, forgetting
/// factor.
struct RlsInit {
  Eigen::Vector3d gamma0{0.67, 0.1, 0.18};
  double cov0{0.01};  ///< initial covariance diagonal
  double xi{1.0};     ///< forgetting factor, in (0, 1]
};

/// State of one per-vehicle recursive least-squares estimator.
struct RlsState {
  Eigen::Vector3d gamma_hat{0.67, 0.1, 0.18};
  Eigen::Matrix3d P{0.01 * Eigen::Matrix3d::Identity()};
  double xi{1.0};
  int reset_count{0};  ///< times the covariance lost positive definiteness
  RlsInit init{};
};

inline RlsState initial_rls_state(const RlsInit& init = RlsInit{}) {
  if (!(init.xi > 0.0 && init.xi <= 1.0))
    throw std::domain_error("RlsInit: xi must be in (0, 1]");
  if (!(init.cov0 > 0.0)) throw std::domain_error("RlsInit: cov0 must be positive");
  RlsState s;
  s.gamma_hat = init.gamma0;
  s.P = init.cov0 * Eigen::Matrix3d::Identity();
  s.xi = init.xi;
  s.reset_count = 0;
  s.init = init;
  return s;
}

/// One recursive update from a regressor and the speed measured one step
/// later. Pure function of (state, sample); returns the new state and the
/// one-step prediction residual.
///
/// The covariance is re-symmetrized every step. If it still loses positive
/// definiteness the estimator falls back to its initial state and counts
/// the reset, so a long run cannot silently corrupt the fit.
inline std::pair<RlsState, double> rls_update(const RlsState& state, const Regressor& reg,
                                              double v_measured_next) {
  if (!std::isfinite(v_measured_next))
    throw std::domain_error("rls_update: non-finite measurement");
  const Eigen::Vector3d& phi = reg.phi;
  const Eigen::Vector3d Pphi = state.P * phi;
  const double denom = state.xi + phi.dot(Pphi);
  const double residual = v_measured_next - state.gamma_hat.dot(phi);

  RlsState next = state;
  next.gamma_hat = state.gamma_hat + (Pphi / denom) * residual;
  Eigen::Matrix3d P = (state.P - (Pphi * Pphi.transpose()) / denom) / state.xi;
  next.P = 0.5 * (P + P.transpose());

  Eigen::LLT<Eigen::Matrix3d> llt(next.P);
  if (llt.info() != Eigen::Success) {
    const int resets = state.reset_count + 1;
    next = initial_rls_state(state.init);
    next.reset_count = resets;
  }
  return {next, residual};
}

/// Inverts the fitted regression coefficients back to car-following
/// parameters. Fails when the headway coefficient is too small to divide
/// by; the caller decides what to fall back on.
inline CthRvParams gamma_to_cthrv(const Eigen::Vector3d& gamma, double tau) {
  if (!(tau > 0.0)) throw std::domain_error("gamma_to_cthrv: need tau > 0");
  if (std::abs(gamma(1)) <= kGammaDegenerate)
    throw std::domain_error("gamma_to_cthrv: degenerate headway coefficient");
  CthRvParams p;
  p.eta = gamma(1) / tau;
  p.nu = gamma(2) / tau;
  p.rho = (1.0 - gamma(0) - gamma(2)) / gamma(1);
  return p;
}

/// Forward map from car-following parameters to the regression
/// coefficients of the one-step speed update.
inline Eigen::Vector3d cthrv_to_gamma(const CthRvParams& params, double tau) {
  return Eigen::Vector3d(1.0 - (params.eta * params.rho + params.nu) * tau, params.eta * tau,
                         params.nu * tau);
}

}  // namespace cavmpc
