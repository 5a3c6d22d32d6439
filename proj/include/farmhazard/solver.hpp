#pragma once

// Weighted elastic-net penalized Cox regression.
//
// Minimizes  L(W theta) + sum_j lambda w_j ( alpha |theta_j| + (1 - alpha) theta_j^2 / 2 )
// by outer re-expansions of the partial likelihood at the current theta and
// cyclic coordinate descent on the penalized quadratic model restricted to the
// working set (nonzero, unpenalized and KKT-violating coordinates). Each outer
// step is accepted through a backtracking line search on the true objective.

#include "farmhazard/core.hpp"
#include "farmhazard/cox.hpp"
#include "farmhazard/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace farmhazard {

struct PenaltySpec {
  double lambda = 0.0;
  double alpha = 1.0;
  Vector weights;  // weight 0 = unpenalized coordinate

  void validate(Index d) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("penalty: lambda must be finite and >= 0");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("penalty: alpha must lie in (0, 1]");
    if (weights.size() != d)
      throw InputError("penalty: weights has length " + std::to_string(weights.size()) + ", expected " +
                       std::to_string(d));
    for (Index j = 0; j < d; ++j)
      if (!(weights[j] >= 0.0) || !std::isfinite(weights[j]))
        throw InputError("penalty: weights must be finite and >= 0");
  }

  bool penalized(Index j) const { return lambda > 0.0 && weights[j] > 0.0; }

  double value(const Vector& theta) const {
    double s = 0.0;
    for (Index j = 0; j < theta.size(); ++j)
      s += weights[j] * (alpha * std::abs(theta[j]) + 0.5 * (1.0 - alpha) * theta[j] * theta[j]);
    return lambda * s;
  }
};

inline PenaltySpec unit_penalty(Index d, double lambda, double alpha = 1.0) {
  return PenaltySpec{lambda, alpha, Vector::Ones(d)};
}

struct SolverOptions {
  double kkt_rel_tol = 1e-6;       // tol = kkt_rel_tol * max(1, ||grad L(0)||_inf)
  double step_rel_tol = 1e-7;      // max |update| < step_rel_tol * (1 + ||theta||_inf)
  int max_sweeps = 10000;          // total coordinate sweeps
  int max_outer = 1000;
  Index hessian_cap = kDefaultHessianCap;
  std::optional<double> grad0_norm;  // cached ||grad L(0)||_inf
};

struct FitResult {
  Vector theta_hat;
  PenaltySpec penalty;
  double objective = 0.0;
  double loss = 0.0;
  double kkt_max_violation = 0.0;
  double kkt_tolerance = 0.0;
  int n_iterations = 0;
  int n_sweeps = 0;
  bool converged = false;
  std::vector<double> objective_trace;

  Index support_size() const {
    Index s = 0;
    for (Index j = 0; j < theta_hat.size(); ++j) s += penalty.penalized(j) && theta_hat[j] != 0.0;
    return s;
  }
};

namespace detail {

inline double soft_threshold(double u, double t) {
  if (u > t) return u - t;
  if (u < -t) return u + t;
  return 0.0;
}

}  // namespace detail

/// Per-coordinate KKT violation at theta given the loss gradient.
inline Vector kkt_violations(const Vector& theta, const Vector& grad, const PenaltySpec& pen) {
  Vector v(theta.size());
  for (Index j = 0; j < theta.size(); ++j) {
    if (!pen.penalized(j)) {
      v[j] = std::abs(grad[j]);
    } else {
      const double l1 = pen.lambda * pen.alpha * pen.weights[j];
      const double l2 = pen.lambda * (1.0 - pen.alpha) * pen.weights[j];
      if (theta[j] != 0.0)
        v[j] = std::abs(grad[j] + l1 * (theta[j] > 0.0 ? 1.0 : -1.0) + l2 * theta[j]);
      else
        v[j] = std::max(0.0, std::abs(grad[j] + l2 * theta[j]) - l1);
    }
  }
  return v;
}

inline double gradient_norm_at_zero(const Matrix& design, const FailureIndex& idx) {
  const RiskState st = risk_state(Vector::Zero(design.rows()), idx);
  const Vector g = design.transpose() * st.residual;
  return g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
}

inline FitResult fit_weighted_enet_cox(const Matrix& design, const FailureIndex& idx, const PenaltySpec& penalty,
                                       const std::optional<Vector>& init = std::nullopt,
                                       const SolverOptions& opts = {}) {
  const Index d = design.cols();
  if (design.rows() != idx.n) throw InputError("fit: design rows do not match the failure index");
  penalty.validate(d);
  if (!design.allFinite()) throw InputError("fit: design contains non-finite entries");

  FitResult res;
  res.penalty = penalty;
  res.theta_hat = init ? *init : Vector::Zero(d);
  if (res.theta_hat.size() != d) throw InputError("fit: initial theta has the wrong length");

  const double g0 = opts.grad0_norm ? *opts.grad0_norm : gradient_norm_at_zero(design, idx);
  res.kkt_tolerance = opts.kkt_rel_tol * std::max(1.0, g0);

  Vector& theta = res.theta_hat;
  Vector eta = design * theta;
  RiskState st = risk_state(eta, idx);
  double objective = st.loss + penalty.value(theta);
  res.objective_trace.push_back(objective);

  double last_step = std::numeric_limits<double>::infinity();
  int increases = 0;
  std::vector<Index> active;
  std::vector<char> in_active(static_cast<std::size_t>(d), 0);

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    const Vector grad = design.transpose() * st.residual;
    const Vector viol = kkt_violations(theta, grad, penalty);
    res.kkt_max_violation = d ? viol.maxCoeff() : 0.0;
    const double step_tol = opts.step_rel_tol * (1.0 + (d ? theta.cwiseAbs().maxCoeff() : 0.0));
    if (res.kkt_max_violation <= res.kkt_tolerance && last_step <= step_tol) {
      res.converged = true;
      break;
    }
    if (res.n_sweeps >= opts.max_sweeps) break;

    // Working set: nonzero, unpenalized, or violating coordinates.
    for (Index j = 0; j < d; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (in_active[ju]) continue;
      if (theta[j] != 0.0 || !penalty.penalized(j) || viol[j] > 0.0) {
        in_active[ju] = 1;
        active.push_back(j);
      }
    }
    std::sort(active.begin(), active.end());
    const Index a = static_cast<Index>(active.size());
    if (a == 0) {
      res.converged = res.kkt_max_violation <= res.kkt_tolerance;
      break;
    }

    const Matrix wa = design(Eigen::all, active);
    const bool full = a <= opts.hessian_cap;
    Matrix h;
    Vector hdiag;
    if (full) {
      h = hessian_full(wa, eta, st, idx);
      hdiag = h.diagonal();
    } else {
      const Matrix mu = risk_set_means(wa, eta, idx);
      hdiag = (wa.array().square().colwise() * st.hazard_weight.array()).colwise().sum().transpose() -
              mu.array().square().colwise().sum().transpose() / static_cast<double>(idx.n);
    }

    // Coordinate descent on the penalized quadratic model in the increment delta.
    Vector delta = Vector::Zero(a);
    Vector hd = Vector::Zero(a);
    const double amax = 1.0 + theta(active).cwiseAbs().maxCoeff();
    for (int sweep = 0; sweep < 1000 && res.n_sweeps < opts.max_sweeps; ++sweep) {
      ++res.n_sweeps;
      double max_change = 0.0;
      for (Index c = 0; c < a; ++c) {
        const Index j = active[static_cast<std::size_t>(c)];
        const double hjj = std::max(0.0, hdiag[c]);
        const double l1 = penalty.penalized(j) ? penalty.lambda * penalty.alpha * penalty.weights[j] : 0.0;
        const double l2 = penalty.penalized(j) ? penalty.lambda * (1.0 - penalty.alpha) * penalty.weights[j] : 0.0;
        const double denom = hjj + l2;
        if (!(denom > 1e-14)) continue;
        const double b = theta[j] + delta[c];
        const double gj = grad[j] + (full ? hd[c] : hjj * delta[c]);
        const double bnew = detail::soft_threshold(hjj * b - gj, l1) / denom;
        const double diff = bnew - b;
        if (diff != 0.0) {
          delta[c] += diff;
          if (full) hd.noalias() += diff * h.col(c);
          max_change = std::max(max_change, std::abs(diff));
        }
      }
      if (!full || max_change <= 1e-13 * amax) break;
      // Strongly correlated columns make cyclic descent crawl. Every few
      // sweeps, solve the model exactly on the current sign pattern and keep
      // the result only when the signs survive.
      if (sweep % 5 == 4) {
        std::vector<Index> nz, zs;
        for (Index c = 0; c < a; ++c) {
          const Index j = active[static_cast<std::size_t>(c)];
          (theta[j] + delta[c] != 0.0 || !penalty.penalized(j) ? nz : zs).push_back(c);
        }
        if (nz.empty()) continue;
        const auto m = static_cast<Index>(nz.size());
        Matrix sys = h(nz, nz);
        Vector rhs(m);
        for (Index r = 0; r < m; ++r) {
          const Index c = nz[static_cast<std::size_t>(r)];
          const Index j = active[static_cast<std::size_t>(c)];
          double off = 0.0;
          for (Index z : zs) off += h(c, z) * (-theta[active[static_cast<std::size_t>(z)]]);
          double l1 = 0.0, l2 = 0.0;
          if (penalty.penalized(j)) {
            l1 = penalty.lambda * penalty.alpha * penalty.weights[j];
            l2 = penalty.lambda * (1.0 - penalty.alpha) * penalty.weights[j];
          }
          const double s = theta[j] + delta[c] > 0.0 ? 1.0 : -1.0;
          sys(r, r) += l2;
          rhs[r] = -(grad[j] + off + l1 * s + l2 * theta[j]);
        }
        const Eigen::LDLT<Matrix> ldlt(sys);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-12 * std::max(1.0, sys.diagonal().maxCoeff())))
          continue;
        const Vector sol = ldlt.solve(rhs);
        if (!sol.allFinite()) continue;
        bool same = true;
        for (Index r = 0; r < m && same; ++r) {
          const Index c = nz[static_cast<std::size_t>(r)];
          const Index j = active[static_cast<std::size_t>(c)];
          if (!penalty.penalized(j)) continue;
          const double before = theta[j] + delta[c];
          const double after = theta[j] + sol[r];
          same = (before > 0.0 && after > 0.0) || (before < 0.0 && after < 0.0);
        }
        if (!same) continue;
        Vector cand = delta;
        for (Index r = 0; r < m; ++r) cand[nz[static_cast<std::size_t>(r)]] = sol[r];
        for (Index z : zs) cand[z] = -theta[active[static_cast<std::size_t>(z)]];
        delta = cand;
        hd.noalias() = h * delta;
      }
    }

    // Backtracking line search on the true objective.
    Vector theta_full_step = theta;
    theta_full_step(active) += delta;
    const double pen_now = penalty.value(theta);
    const double predicted = grad(active).dot(delta) + penalty.value(theta_full_step) - pen_now;
    const Vector eta_dir = wa * delta;
    double t = 1.0;
    bool accepted = false;
    double new_obj = objective;
    RiskState new_st;
    Vector new_theta;
    Vector new_eta;
    for (int ls = 0; ls < 60; ++ls) {
      new_theta = theta;
      new_theta(active) += t * delta;
      new_eta = eta + t * eta_dir;
      bool finite = new_eta.allFinite();
      if (finite) {
        try {
          new_st = risk_state(new_eta, idx);
        } catch (const NumericalError&) {
          finite = false;
        }
      }
      if (finite) {
        new_obj = new_st.loss + penalty.value(new_theta);
        if (new_obj <= objective + 1e-4 * t * std::min(0.0, predicted) + 1e-15 * std::abs(objective)) {
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    ++res.n_iterations;
    if (!accepted) break;

    last_step = t * (delta.size() ? delta.cwiseAbs().maxCoeff() : 0.0);
    increases = new_obj > objective + 1e-10 ? increases + 1 : 0;
    if (increases >= 3) {
      std::ostringstream msg;
      msg << "fit: objective increased across 3 outer iterations; trace:";
      for (double v : res.objective_trace) msg << ' ' << v;
      throw NumericalError(msg.str());
    }
    theta = std::move(new_theta);
    eta = std::move(new_eta);
    st = std::move(new_st);
    objective = new_obj;
    res.objective_trace.push_back(objective);

    // Drop coordinates that returned to zero so the working set stays small.
    std::vector<Index> kept;
    for (Index j : active) {
      if (theta[j] != 0.0 || !penalty.penalized(j)) {
        kept.push_back(j);
      } else {
        in_active[static_cast<std::size_t>(j)] = 0;
      }
    }
    active.swap(kept);
  }

  // Round-off residue: penalized coordinates at the 1e-10 level are snapped to
  // zero when the certificate survives it.
  if (res.converged && d) {
    const double snap = 1e-10 * (1.0 + theta.cwiseAbs().maxCoeff());
    Vector snapped = theta;
    bool any = false;
    for (Index j = 0; j < d; ++j)
      if (penalty.penalized(j) && theta[j] != 0.0 && std::abs(theta[j]) <= snap) {
        snapped[j] = 0.0;
        any = true;
      }
    if (any) {
      const RiskState s2 = risk_state(design * snapped, idx);
      const Vector g2 = design.transpose() * s2.residual;
      const double v2 = kkt_violations(snapped, g2, penalty).maxCoeff();
      if (v2 <= res.kkt_tolerance) {
        theta = snapped;
        st = s2;
        objective = st.loss + penalty.value(theta);
        res.kkt_max_violation = v2;
      }
    }
  }

  if (!res.converged) {
    const Vector grad = design.transpose() * st.residual;
    res.kkt_max_violation = d ? kkt_violations(theta, grad, penalty).maxCoeff() : 0.0;
  }
  res.loss = st.loss;
  res.objective = objective;
  return res;
}

/// Derivative of the SCAD penalty,
///   p'_lambda(b) = lambda ( 1{b <= lambda} + (a lambda - b)_+ / ((a - 1) lambda) 1{b > lambda} ).
inline double scad_weight(double beta_abs, double lambda, double a = 3.7) {
  if (!(lambda > 0.0)) throw InputError("scad_weight: lambda must be > 0");
  if (!(a > 2.0)) throw InputError("scad_weight: a must be > 2");
  if (beta_abs < 0.0) throw InputError("scad_weight: beta_abs must be >= 0");
  if (beta_abs <= lambda) return lambda;
  return std::max(0.0, a * lambda - beta_abs) / (a - 1.0);
}

/// Penalty weights for one LLA step: lambda * w_j = p'_lambda(|init_j|) on the
/// penalized coordinates, 0 elsewhere.
inline Vector lla_weights(const Vector& init, const Vector& base_weights, double lambda, double a = 3.7) {
  Vector w = Vector::Zero(init.size());
  if (!(lambda > 0.0)) return base_weights;
  for (Index j = 0; j < init.size(); ++j)
    if (base_weights[j] > 0.0) w[j] = scad_weight(std::abs(init[j]), lambda, a) / lambda;
  return w;
}

/// Unpenalized fit over the coordinates whose weight is 0 (others held at 0).
/// Returns the full-length theta.
inline Vector fit_unpenalized_block(const Matrix& design, const FailureIndex& idx, const Vector& weights,
                                    const SolverOptions& opts = {}) {
  std::vector<Index> cols;
  for (Index j = 0; j < design.cols(); ++j)
    if (weights[j] == 0.0) cols.push_back(j);
  Vector theta = Vector::Zero(design.cols());
  if (cols.empty()) return theta;
  const Matrix sub = design(Eigen::all, cols);
  const FitResult r = fit_weighted_enet_cox(sub, idx, PenaltySpec{0.0, 1.0, Vector::Zero(sub.cols())}, std::nullopt, opts);
  theta(cols) = r.theta_hat;
  return theta;
}

/// Smallest lambda for which every penalized coordinate is zero:
///   max_j |grad_j L(theta_u)| / (alpha w_j).
inline double lambda_max(const Matrix& design, const FailureIndex& idx, double alpha, const Vector& weights,
                         const SolverOptions& opts = {}) {
  const Vector theta_u = fit_unpenalized_block(design, idx, weights, opts);
  const RiskState st = risk_state(design * theta_u, idx);
  const Vector g = design.transpose() * st.residual;
  double lm = 0.0;
  for (Index j = 0; j < design.cols(); ++j)
    if (weights[j] > 0.0) lm = std::max(lm, std::abs(g[j]) / (alpha * weights[j]));
  return lm;
}

}  // namespace farmhazard
