#pragma once

// Cox partial likelihood: loss, score, Hessian and the score/irrepresentable
// diagnostics. Everything is evaluated through suffix sweeps over the sorted
// samples, so a full loss + gradient costs O(n d).

#include "farmhazard/core.hpp"
#include "farmhazard/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace farmhazard {

struct CoxDerivatives {
  double loss = 0.0;
  Vector gradient;
  Matrix hessian;  // empty unless requested
};

/// Per-sample quantities that depend only on the linear predictor.
///   loss            = n^-1 sum_j { log S0_j - eta_(j) }
///   hazard_weight_i = n^-1 sum_{j : i in R_j} exp(eta_i) / S0_j
///   residual_i      = hazard_weight_i - delta_i / n     (gradient = W^T residual)
struct RiskState {
  double loss = 0.0;
  Vector log_risk_sum;   // per failure, log sum_{R_j} exp(eta)
  Vector hazard_weight;  // per sample, original order
  Vector residual;       // per sample, original order
};

namespace detail {

inline void check_finite_eta(const Vector& eta) {
  for (Index i = 0; i < eta.size(); ++i)
    if (!std::isfinite(eta[i]))
      throw NumericalError("non-finite linear predictor at sample " + std::to_string(i));
}

/// log of suffix sums of exp(eta) along the sorted order, with the running
/// maximum of the current risk set subtracted before exponentiation.
inline Vector suffix_log_sum_exp(const Vector& eta, const FailureIndex& idx) {
  Vector out(idx.n);
  double m = -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (Index k = idx.n - 1; k >= 0; --k) {
    const double e = eta[idx.order[static_cast<std::size_t>(k)]];
    if (e > m) {
      s = s * std::exp(m - e) + 1.0;
      m = e;
    } else {
      s += std::exp(e - m);
    }
    out[k] = m + std::log(s);
  }
  return out;
}

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace detail

inline double loss_from_eta(const Vector& eta, const FailureIndex& idx) {
  detail::check_finite_eta(eta);
  const Vector lse = detail::suffix_log_sum_exp(eta, idx);
  double q = 0.0;
  for (Index j = 0; j < idx.n_events; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    q += lse[idx.risk_begin[ju]] - eta[idx.order[static_cast<std::size_t>(idx.failure_positions[ju])]];
  }
  return q / static_cast<double>(idx.n);
}

inline RiskState risk_state(const Vector& eta, const FailureIndex& idx) {
  detail::check_finite_eta(eta);
  if (eta.size() != idx.n) throw InputError("risk_state: linear predictor length mismatch");
  RiskState st;
  const Vector lse = detail::suffix_log_sum_exp(eta, idx);
  const double n = static_cast<double>(idx.n);
  st.log_risk_sum.resize(idx.n_events);
  double q = 0.0;
  for (Index j = 0; j < idx.n_events; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    st.log_risk_sum[j] = lse[idx.risk_begin[ju]];
    q += st.log_risk_sum[j] - eta[idx.order[static_cast<std::size_t>(idx.failure_positions[ju])]];
  }
  st.loss = q / n;

  // log A_k = log sum_{j : risk_begin_j <= k} exp(-log S0_j), forward over sorted positions.
  st.hazard_weight.resize(idx.n);
  st.residual.resize(idx.n);
  double log_a = -std::numeric_limits<double>::infinity();
  Index next_failure = 0;
  for (Index k = 0; k < idx.n; ++k) {
    while (next_failure < idx.n_events && idx.risk_begin[static_cast<std::size_t>(next_failure)] <= k) {
      log_a = detail::log_add(log_a, -st.log_risk_sum[next_failure]);
      ++next_failure;
    }
    const Index i = idx.order[static_cast<std::size_t>(k)];
    const double w = (log_a == -std::numeric_limits<double>::infinity()) ? 0.0 : std::exp(eta[i] + log_a) / n;
    st.hazard_weight[i] = w;
  }
  st.residual = st.hazard_weight;
  for (Index j = 0; j < idx.n_events; ++j) st.residual[idx.failure_sample(j)] -= 1.0 / n;
  return st;
}

/// Risk-set weighted means mu_j = S1_j / S0_j of the given columns, one row per
/// failure (N x c). The accumulators are rescaled whenever the running maximum
/// of eta over the current risk set increases.
template <class Derived>
Matrix risk_set_means(const Eigen::MatrixBase<Derived>& cols, const Vector& eta, const FailureIndex& idx) {
  const Index c = cols.cols();
  Matrix mu(idx.n_events, c);
  Eigen::RowVectorXd s1 = Eigen::RowVectorXd::Zero(c);
  double s0 = 0.0;
  double m = -std::numeric_limits<double>::infinity();
  Index failure = idx.n_events - 1;
  for (Index k = idx.n - 1; k >= 0 && failure >= 0; --k) {
    const Index i = idx.order[static_cast<std::size_t>(k)];
    const double e = eta[i];
    if (e > m) {
      const double r = std::exp(m - e);
      s0 *= r;
      s1 *= r;
      m = e;
    }
    const double w = std::exp(e - m);
    s0 += w;
    s1.noalias() += w * cols.row(i);
    while (failure >= 0 && idx.risk_begin[static_cast<std::size_t>(failure)] == k) {
      mu.row(failure) = s1 / s0;
      --failure;
    }
  }
  return mu;
}

/// Hessian block rows x cols from a precomputed risk state:
///   H = W^T diag(hazard_weight) W - n^-1 sum_j mu_j mu_j^T.
template <class DerivedA, class DerivedB>
Matrix hessian_block(const Eigen::MatrixBase<DerivedA>& rows_design, const Eigen::MatrixBase<DerivedB>& cols_design,
                     const Vector& eta, const RiskState& st, const FailureIndex& idx) {
  const Matrix mu_r = risk_set_means(rows_design, eta, idx);
  const Matrix mu_c = risk_set_means(cols_design, eta, idx);
  Matrix h = rows_design.transpose() * st.hazard_weight.asDiagonal() * cols_design;
  h.noalias() -= mu_r.transpose() * mu_c / static_cast<double>(idx.n);
  return h;
}

template <class Derived>
Matrix hessian_full(const Eigen::MatrixBase<Derived>& design, const Vector& eta, const RiskState& st,
                    const FailureIndex& idx) {
  const Matrix mu = risk_set_means(design, eta, idx);
  Matrix h = design.transpose() * st.hazard_weight.asDiagonal() * design;
  h.noalias() -= mu.transpose() * mu / static_cast<double>(idx.n);
  return 0.5 * (h + h.transpose());
}

inline void check_design(const Matrix& design, const Vector& theta, const FailureIndex& idx) {
  if (design.rows() != idx.n)
    throw InputError("design has " + std::to_string(design.rows()) + " rows, index has " + std::to_string(idx.n));
  if (design.cols() != theta.size())
    throw InputError("design has " + std::to_string(design.cols()) + " columns, theta has " +
                     std::to_string(theta.size()));
}

/// L(design * theta) = -n^-1 log partial likelihood.
inline double partial_loglik_loss(const Matrix& design, const Vector& theta, const FailureIndex& idx) {
  check_design(design, theta, idx);
  return loss_from_eta(design * theta, idx);
}

/// Unnormalized log partial likelihood Q = -n L.
inline double log_partial_likelihood(const Vector& eta, const FailureIndex& idx) {
  return -static_cast<double>(idx.n) * loss_from_eta(eta, idx);
}

/// Largest dimension for which a dense Hessian is materialized.
inline constexpr Index kDefaultHessianCap = 2000;

inline CoxDerivatives cox_derivatives(const Matrix& design, const Vector& theta, const FailureIndex& idx,
                                      bool want_hessian, Index hessian_cap = kDefaultHessianCap) {
  check_design(design, theta, idx);
  if (want_hessian && design.cols() > hessian_cap)
    throw InputError("cox_derivatives: dense Hessian requested for d = " + std::to_string(design.cols()) +
                     " above the cap of " + std::to_string(hessian_cap));
  const Vector eta = design * theta;
  const RiskState st = risk_state(eta, idx);
  CoxDerivatives out;
  out.loss = st.loss;
  out.gradient = design.transpose() * st.residual;
  if (want_hessian) out.hessian = hessian_full(design, eta, st, idx);
  return out;
}

/// Sup-norm of the score on design `w_hat` with risk weights taken from the
/// true linear predictor `true_eta` = X beta_star.
inline double score_at_truth(const Matrix& w_hat, const Vector& true_eta, const FailureIndex& idx) {
  if (w_hat.rows() != true_eta.size() || w_hat.rows() != idx.n)
    throw InputError("score_at_truth: row count mismatch");
  const RiskState st = risk_state(true_eta, idx);
  const Vector g = w_hat.transpose() * st.residual;
  return g.size() == 0 ? 0.0 : g.cwiseAbs().maxCoeff();
}

inline double score_at_truth(const SurvivalDataset& ds, const Matrix& w_hat, const Vector& beta_star) {
  if (beta_star.size() != ds.p()) throw InputError("score_at_truth: beta_star length mismatch");
  return score_at_truth(w_hat, ds.x() * beta_star, build_failure_index(ds));
}

/// || H_{S^c S} H_{SS}^{-1} ||_inf at design * theta_star. Refuses to invert an
/// SS block with reciprocal condition number below `min_rcond`.
inline double irrepresentable_stat(const Matrix& design, const Vector& theta_star, const std::vector<Index>& support,
                                   const FailureIndex& idx, double min_rcond = 1e-12) {
  check_design(design, theta_star, idx);
  if (support.empty()) throw InputError("irrepresentable_stat: support must be nonempty");
  const Index d = design.cols();
  std::vector<char> in_s(static_cast<std::size_t>(d), 0);
  for (Index j : support) {
    if (j < 0 || j >= d) throw InputError("irrepresentable_stat: support index out of range");
    in_s[static_cast<std::size_t>(j)] = 1;
  }
  std::vector<Index> s_cols, c_cols;
  for (Index j = 0; j < d; ++j) (in_s[static_cast<std::size_t>(j)] ? s_cols : c_cols).push_back(j);
  if (c_cols.empty()) return 0.0;

  const Matrix ws = design(Eigen::all, s_cols);
  const Matrix wc = design(Eigen::all, c_cols);
  const Vector eta = design * theta_star;
  const RiskState st = risk_state(eta, idx);
  const Matrix h_ss = hessian_full(ws, eta, st, idx);
  const Matrix h_cs = hessian_block(wc, ws, eta, st, idx);

  Eigen::SelfAdjointEigenSolver<Matrix> es(h_ss);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  const double rcond = lmax > 0.0 ? lmin / lmax : 0.0;
  if (!(rcond >= min_rcond))
    throw NumericalError("irrepresentable_stat: Hessian SS block is singular (reciprocal condition " +
                         std::to_string(rcond) + "); add a small ridge perturbation to the design");
  const Matrix prod = h_ss.ldlt().solve(h_cs.transpose()).transpose();
  return prod.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace farmhazard
