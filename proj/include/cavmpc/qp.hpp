#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavmpc {

/// Strictly convex quadratic program
///   minimize    0.5 x'Hx + f'x
///   subject to  A x <= b,  lb <= x <= ub,
/// with +-infinity marking absent bounds. A may have zero rows.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  Eigen::Index n() const { return H.rows(); }
  Eigen::Index m() const { return A.rows(); }

  void validate() const {
    const Eigen::Index nn = H.rows();
    if (nn < 1 || H.cols() != nn) throw std::invalid_argument("QpProblem: H must be square");
    if (f.size() != nn) throw std::invalid_argument("QpProblem: f size mismatch");
    if (A.rows() > 0 && A.cols() != nn) throw std::invalid_argument("QpProblem: A column mismatch");
    if (b.size() != A.rows()) throw std::invalid_argument("QpProblem: b size mismatch");
    if (lb.size() != nn || ub.size() != nn)
      throw std::invalid_argument("QpProblem: bound size mismatch");
    if (!H.allFinite() || !f.allFinite())
      throw std::invalid_argument("QpProblem: non-finite objective");
    if (A.rows() > 0 && (!A.allFinite() || !b.allFinite()))
      throw std::invalid_argument("QpProblem: non-finite constraint");
    for (Eigen::Index j = 0; j < nn; ++j) {
      if (std::isnan(lb(j)) || std::isnan(ub(j)))
        throw std::invalid_argument("QpProblem: NaN bound");
    }
  }
};

enum class QpStatus { optimal, max_iter, infeasible };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iter: return "max_iter";
    default: return "infeasible";
  }
}

struct KktResiduals {
  double stationarity{0.0};
  double primal{0.0};
  double complementarity{0.0};
  double worst() const { return std::max(stationarity, std::max(primal, complementarity)); }
};

struct QpMultipliers {
  Eigen::VectorXd lambda;  ///< general rows
  Eigen::VectorXd mu_lb;
  Eigen::VectorXd mu_ub;
};

struct QpSolution {
  Eigen::VectorXd x;
  double objective{0.0};
  QpStatus status{QpStatus::optimal};
  QpMultipliers multipliers;
  KktResiduals kkt;
  int iterations{0};
  bool regularized{false};        ///< Hessian needed a diagonal bump to factor
  double max_violation{0.0};      ///< worst remaining violation (diagnostic)
  std::vector<int> active_set;    ///< constraint ids active at exit
  std::vector<double> objective_trace;  ///< objective after each active-set change
};

/// Hint from a previous related solve: constraint ids to try first when
/// picking the next violated constraint. Ordering preference only; the
/// result is the same optimum either way.
struct QpWarmStart {
  std::vector<int> active;
};

/// KKT residuals of a candidate primal-dual pair, computed from scratch so
/// the check is independent of the solver's internal bookkeeping.
inline KktResiduals kkt_residuals(const QpProblem& qp, const Eigen::VectorXd& x,
                                  const QpMultipliers& mult) {
  const Eigen::Index n = qp.n(), m = qp.m();
  KktResiduals r;
  Eigen::VectorXd g = qp.H.selfadjointView<Eigen::Lower>() * x + qp.f;
  if (m > 0) g += qp.A.transpose() * mult.lambda;
  g -= mult.mu_lb;
  g += mult.mu_ub;
  r.stationarity = g.lpNorm<Eigen::Infinity>();
  if (m > 0) {
    const Eigen::VectorXd s = qp.A * x - qp.b;
    for (Eigen::Index i = 0; i < m; ++i) {
      r.primal = std::max(r.primal, s(i));
      r.complementarity = std::max(r.complementarity, std::abs(mult.lambda(i) * s(i)));
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(qp.lb(j))) {
      r.primal = std::max(r.primal, qp.lb(j) - x(j));
      r.complementarity =
          std::max(r.complementarity, std::abs(mult.mu_lb(j) * (qp.lb(j) - x(j))));
    }
    if (std::isfinite(qp.ub(j))) {
      r.primal = std::max(r.primal, x(j) - qp.ub(j));
      r.complementarity =
          std::max(r.complementarity, std::abs(mult.mu_ub(j) * (x(j) - qp.ub(j))));
    }
  }
  r.primal = std::max(r.primal, 0.0);
  return r;
}

namespace detail {

// Constraints are numbered: [0, m) general rows, [m, m+n) lower bounds,
// [m+n, m+2n) upper bounds, all expressed internally as n_k'x >= d_k.
class QpWorkspace {
 public:
  QpWorkspace(const QpProblem& qp, const Eigen::MatrixXd& Hsym)
      : qp_(qp), Hs_(Hsym), n_(qp.n()), m_(qp.m()) {}

  int total() const { return static_cast<int>(m_ + 2 * n_); }

  // Slack s_k(x) = n_k'x - d_k; negative means violated. Infinite bounds
  // yield +infinity, so they are never selected.
  double slack(int k, const Eigen::VectorXd& x) const {
    if (k < m_) return qp_.b(k) - qp_.A.row(k).dot(x);
    if (k < m_ + n_) return x(k - m_) - qp_.lb(k - m_);
    return qp_.ub(k - m_ - n_) - x(k - m_ - n_);
  }

  void normal(int k, Eigen::VectorXd& out) const {
    out.setZero(n_);
    if (k < m_) {
      out = -qp_.A.row(k).transpose();
    } else if (k < m_ + n_) {
      out(k - m_) = 1.0;
    } else {
      out(k - m_ - n_) = -1.0;
    }
  }

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(Hs_ * x) + qp_.f.dot(x);
  }

 private:
  const QpProblem& qp_;
  const Eigen::MatrixXd& Hs_;
  Eigen::Index n_, m_;
};

}  // namespace detail

/// Solves the QP with a dual active-set method: start at the unconstrained
/// minimum, repeatedly pick a violated constraint and take the exact primal
/// and dual steps that make it active, dropping blocking constraints on the
/// way. No feasible starting point is needed and every active-set change
/// moves the objective monotonically upward toward the constrained optimum.
///
/// Deterministic: ties break toward the lowest constraint id and a warm
/// start only reorders the scan. Throws std::invalid_argument for malformed
/// input or a Hessian that stays indefinite after a small diagonal bump.
inline QpSolution solve_qp(const QpProblem& qp, double tol = 1e-6, int max_iter = 4000,
                           const std::optional<QpWarmStart>& warm = std::nullopt) {
  qp.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("solve_qp: need tol > 0");
  if (max_iter < 1) throw std::invalid_argument("solve_qp: need max_iter >= 1");

  const Eigen::Index n = qp.n(), m = qp.m();
  const double inf = std::numeric_limits<double>::infinity();

  Eigen::MatrixXd Hs = 0.5 * (qp.H + qp.H.transpose());
  QpSolution sol;
  Eigen::LLT<Eigen::MatrixXd> llt(Hs);
  if (llt.info() != Eigen::Success) {
    Hs.diagonal().array() += 1e-9;
    llt.compute(Hs);
    sol.regularized = true;
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("solve_qp: Hessian is not positive definite");
  }

  detail::QpWorkspace ws(qp, Hs);
  const int total = ws.total();

  // J spans the H-metric geometry: J = L^{-T} initially, rotated in place as
  // constraints enter and leave. R is the triangular factor of the active
  // normals in that geometry.
  Eigen::MatrixXd J = llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd x = -llt.solve(qp.f);
  Eigen::VectorXd d(n), npv(n);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n + 1);
  std::vector<int> active;
  std::vector<char> in_active(static_cast<size_t>(total), 0);
  int q = 0;

  // De-duplicated warm-start preference list.
  std::vector<int> hints;
  if (warm) {
    for (int id : warm->active)
      if (id >= 0 && id < total) hints.push_back(id);
    std::sort(hints.begin(), hints.end());
    hints.erase(std::unique(hints.begin(), hints.end()), hints.end());
  }

  sol.objective_trace.push_back(ws.objective(x));

  const auto rotate_J_cols = [&](Eigen::Index a, Eigen::Index bcol, double c, double s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t1 = J(i, a), t2 = J(i, bcol);
      J(i, a) = c * t1 + s * t2;
      J(i, bcol) = -s * t1 + c * t2;
    }
  };

  const auto add_active = [&](int id, double u_new) {
    for (Eigen::Index j = n - 1; j >= q + 1; --j) {
      if (d(j) == 0.0) continue;
      const double h = std::hypot(d(j - 1), d(j));
      const double c = d(j - 1) / h, s = d(j) / h;
      d(j - 1) = h;
      d(j) = 0.0;
      rotate_J_cols(j - 1, j, c, s);
    }
    R.col(q).head(q + 1) = d.head(q + 1);
    u(q) = u_new;
    active.push_back(id);
    in_active[static_cast<size_t>(id)] = 1;
    ++q;
  };

  const auto drop_active = [&](int pos) {
    in_active[static_cast<size_t>(active[static_cast<size_t>(pos)])] = 0;
    active.erase(active.begin() + pos);
    for (int k = pos; k < q - 1; ++k) {
      R.col(k).head(k + 2) = R.col(k + 1).head(k + 2);
      u(k) = u(k + 1);
    }
    --q;
    R.col(q).setZero();
    u(q) = 0.0;
    for (int j = pos; j < q; ++j) {
      if (R(j + 1, j) == 0.0) continue;
      const double h = std::hypot(R(j, j), R(j + 1, j));
      const double c = R(j, j) / h, s = R(j + 1, j) / h;
      for (int k = j; k < q; ++k) {
        const double t1 = R(j, k), t2 = R(j + 1, k);
        R(j, k) = c * t1 + s * t2;
        R(j + 1, k) = -s * t1 + c * t2;
      }
      R(j + 1, j) = 0.0;
      rotate_J_cols(j, j + 1, c, s);
    }
  };

  const auto finish = [&](QpStatus status) {
    sol.x = x;
    sol.status = status;
    sol.objective = ws.objective(x);
    sol.multipliers.lambda = Eigen::VectorXd::Zero(m);
    sol.multipliers.mu_lb = Eigen::VectorXd::Zero(n);
    sol.multipliers.mu_ub = Eigen::VectorXd::Zero(n);
    for (int pos = 0; pos < q; ++pos) {
      const int id = active[static_cast<size_t>(pos)];
      const double val = std::max(u(pos), 0.0);
      if (id < m) {
        sol.multipliers.lambda(id) = val;
      } else if (id < m + n) {
        sol.multipliers.mu_lb(id - m) = val;
      } else {
        sol.multipliers.mu_ub(id - m - n) = val;
      }
    }
    sol.kkt = kkt_residuals(qp, x, sol.multipliers);
    sol.active_set = active;
    double worst = 0.0;
    for (int k = 0; k < total; ++k) worst = std::max(worst, -ws.slack(k, x));
    sol.max_violation = worst;
    return sol;
  };

  int iter = 0;
  for (;;) {
    // Most violated constraint, warm-start hints first.
    int p = -1;
    double worst = -tol;
    for (int id : hints) {
      if (in_active[static_cast<size_t>(id)]) continue;
      const double s = ws.slack(id, x);
      if (s < worst) {
        worst = s;
        p = id;
      }
    }
    if (p < 0) {
      for (int k = 0; k < total; ++k) {
        if (in_active[static_cast<size_t>(k)]) continue;
        const double s = ws.slack(k, x);
        if (s < worst) {
          worst = s;
          p = k;
        }
      }
    }
    if (p < 0) {
      sol.iterations = iter;
      return finish(QpStatus::optimal);
    }

    ws.normal(p, npv);
    double u_p = 0.0;
    for (;;) {
      if (++iter > max_iter) {
        sol.iterations = iter - 1;
        return finish(QpStatus::max_iter);
      }
      d.noalias() = J.transpose() * npv;
      if (q > 0)
        r.head(q) = R.topLeftCorner(q, q).triangularView<Eigen::Upper>().solve(d.head(q));

      double t1 = inf;
      int blocking = -1;
      for (int j = 0; j < q; ++j) {
        if (r(j) > 0.0) {
          const double cand = u(j) / r(j);
          if (cand < t1) {
            t1 = cand;
            blocking = j;
          }
        }
      }

      const double d2norm2 = (q < n) ? d.tail(n - q).squaredNorm() : 0.0;
      const bool z_zero = d2norm2 <= 1e-24 * std::max(1.0, d.squaredNorm());
      const double s_p = ws.slack(p, x);
      double t2 = inf;
      Eigen::VectorXd z;
      if (!z_zero) {
        z.noalias() = J.rightCols(n - q) * d.tail(n - q);
        const double znp = z.dot(npv);
        if (znp > 0.0) t2 = -s_p / znp;
      }

      if (t2 == inf && t1 == inf) {
        sol.iterations = iter;
        return finish(QpStatus::infeasible);
      }

      if (t2 == inf) {
        // Dual-only step: lift multipliers until a blocking constraint
        // leaves, then retry the same target constraint.
        for (int j = 0; j < q; ++j) u(j) -= t1 * r(j);
        u_p += t1;
        drop_active(blocking);
        sol.objective_trace.push_back(ws.objective(x));
        continue;
      }

      const double t = std::min(t1, t2);
      x += t * z;
      for (int j = 0; j < q; ++j) u(j) -= t * r(j);
      u_p += t;
      sol.objective_trace.push_back(ws.objective(x));
      if (t2 <= t1) {
        add_active(p, u_p);
        break;
      }
      drop_active(blocking);
    }
  }
}

/// Writes the full problem, round-trippable at double precision, for
/// offline reproduction of a failing solve.
inline void dump_problem(const QpProblem& qp, std::ostream& os) {
  char buf[40];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  const auto put_matrix = [&](const char* name, const Eigen::MatrixXd& M) {
    os << name << " " << M.rows() << " " << M.cols() << "\n";
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index j = 0; j < M.cols(); ++j) {
        if (j) os << " ";
        put(M(i, j));
      }
      os << "\n";
    }
  };
  os << "qp n=" << qp.n() << " m=" << qp.m() << "\n";
  put_matrix("H", qp.H);
  put_matrix("f", qp.f);
  put_matrix("A", qp.A);
  put_matrix("b", qp.b);
  put_matrix("lb", qp.lb);
  put_matrix("ub", qp.ub);
}

}  // namespace cavmpc
