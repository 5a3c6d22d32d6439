#pragma once

// Factor-adjusted marginal screening and the plain SIS baseline.

#include "farmhazard/core.hpp"
#include "farmhazard/cox.hpp"
#include "farmhazard/dataset.hpp"
#include "farmhazard/factor.hpp"
#include "farmhazard/metrics.hpp"
#include "farmhazard/parallel.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace farmhazard {

struct MarginalFit {
  double beta = 0.0;
  Vector gamma;
  bool converged = false;
  int iterations = 0;
};

/// Unpenalized Cox MLE on the (1 + K) columns [u_col, f_hat] by Newton with
/// step-halving. Converged when the gradient sup-norm drops below 1e-8.
inline MarginalFit marginal_augmented_fit(const Vector& u_col, const Matrix& f_hat, const FailureIndex& idx,
                                          int max_steps = 100, int max_halvings = 30) {
  const Index n = u_col.size();
  const Index k = f_hat.cols();
  Matrix w(n, 1 + k);
  w.col(0) = u_col;
  if (k) w.rightCols(k) = f_hat;
  // An all-zero column carries no information; drop it from the Newton system.
  const bool degenerate = u_col.cwiseAbs().maxCoeff() == 0.0;
  const Matrix design = degenerate ? Matrix(f_hat) : w;
  const Index d = design.cols();

  MarginalFit out;
  out.gamma = Vector::Zero(k);
  if (d == 0) {
    out.converged = true;
    return out;
  }
  Vector theta = Vector::Zero(d);
  CoxDerivatives der = cox_derivatives(design, theta, idx, true);
  for (int step = 0; step < max_steps; ++step) {
    if (der.gradient.cwiseAbs().maxCoeff() < 1e-8) {
      out.converged = true;
      break;
    }
    ++out.iterations;
    const Eigen::LDLT<Matrix> ldlt(der.hessian);
    Vector dir = ldlt.solve(der.gradient);
    if (ldlt.info() != Eigen::Success || !dir.allFinite()) dir = der.gradient;
    double t = 1.0;
    bool moved = false;
    for (int h = 0; h <= max_halvings; ++h, t *= 0.5) {
      const Vector cand = theta - t * dir;
      double loss;
      try {
        loss = partial_loglik_loss(design, cand, idx);
      } catch (const NumericalError&) {
        continue;
      }
      if (loss <= der.loss) {
        theta = cand;
        moved = true;
        break;
      }
    }
    if (!moved) break;
    der = cox_derivatives(design, theta, idx, true);
  }
  if (!out.converged && der.gradient.cwiseAbs().maxCoeff() < 1e-8) out.converged = true;
  if (degenerate) {
    out.gamma = theta;
  } else {
    out.beta = theta[0];
    out.gamma = theta.tail(k);
  }
  return out;
}

struct Selector {
  std::optional<Index> top_d;
  std::optional<double> threshold;

  static Selector top(Index d) { return Selector{d, std::nullopt}; }
  static Selector at_least(double xi) { return Selector{std::nullopt, xi}; }
};

struct ScreeningResult {
  Vector beta_marginal;            // |beta_j|, 0 for failed or dropped columns
  std::vector<Index> ranking;      // descending |beta_j|, ties by ascending index
  std::vector<Index> selected;     // ascending indices
  std::vector<Index> failed;       // columns whose marginal fit did not converge
  Index k = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline ScreeningResult rank_and_select(Vector scores, std::vector<Index> failed, const Selector& sel) {
  ScreeningResult res;
  const Index p = scores.size();
  // Failed fits are ranked last: a negative score sorts below every |beta|.
  Vector key = scores;
  for (Index j : failed) key[j] = -1.0;
  res.ranking = rank_descending(key);
  res.beta_marginal = std::move(scores);
  res.failed = std::move(failed);
  if (sel.top_d) {
    if (*sel.top_d < 0) throw InputError("screen: top_d must be >= 0");
    const Index d = std::min(*sel.top_d, p);
    res.selected.assign(res.ranking.begin(), res.ranking.begin() + d);
  } else if (sel.threshold) {
    for (Index j = 0; j < p; ++j)
      if (res.beta_marginal[j] >= *sel.threshold) res.selected.push_back(j);
  } else {
    throw InputError("screen: give either top_d or threshold");
  }
  std::sort(res.selected.begin(), res.selected.end());
  return res;
}

inline Vector unit_sd_column(const Vector& c) {
  const double mean = c.mean();
  const double sd = std::sqrt((c.array() - mean).square().sum() / static_cast<double>(std::max<Index>(1, c.size() - 1)));
  if (!(sd > 1e-13 * std::max(1.0, std::abs(mean)))) return Vector::Zero(c.size());
  return (c.array() - mean) / sd;
}

inline ScreeningResult marginal_screen(const Matrix& u, const Matrix& f, const FailureIndex& idx, const Selector& sel,
                                       unsigned threads) {
  const Index p = u.cols();
  Vector scores = Vector::Zero(p);
  std::vector<char> ok(static_cast<std::size_t>(p), 1);
  parallel_for(static_cast<std::size_t>(p), threads, [&](std::size_t j) {
    const auto jj = static_cast<Index>(j);
    const MarginalFit mf = marginal_augmented_fit(unit_sd_column(u.col(jj)), f, idx);
    scores[jj] = mf.converged ? std::abs(mf.beta) : 0.0;
    ok[j] = mf.converged;
  });
  std::vector<Index> failed;
  for (Index j = 0; j < p; ++j)
    if (!ok[static_cast<std::size_t>(j)]) failed.push_back(j);
  return rank_and_select(std::move(scores), std::move(failed), sel);
}

}  // namespace detail

/// Factor-adjusted screening: decompose X (K from ACT when absent), then one
/// marginal fit on [u_j, F] per covariate, all columns standardized.
inline ScreeningResult screen(const SurvivalDataset& ds, std::optional<Index> k, const Selector& sel,
                              unsigned threads = 1) {
  if (ds.has_missing()) throw InputError("screen: covariates contain missing values; impute first");
  const FailureIndex idx = build_failure_index(ds);
  const Matrix& x = ds.x();
  Index kk = k ? *k : (x.cols() >= 2 && x.rows() >= 4 ? estimate_num_factors_act(x) : 0);
  kk = std::min<Index>(kk, std::max<Index>(0, std::min(x.rows(), x.cols()) - 1));
  const FactorDecomposition dec = decompose(x, kk);
  Matrix f(x.rows(), dec.k);
  for (Index c = 0; c < dec.k; ++c) f.col(c) = detail::unit_sd_column(dec.f_hat.col(c));
  ScreeningResult res = detail::marginal_screen(dec.u_hat, f, idx, sel, threads);
  res.k = dec.k;
  res.warnings = dec.warnings;
  if (!res.failed.empty())
    res.warnings.push_back(std::to_string(res.failed.size()) + " marginal fit(s) did not converge; ranked last");
  return res;
}

/// Sure independence screening: univariate Cox fit per standardized covariate.
inline ScreeningResult sis_baseline(const SurvivalDataset& ds, const Selector& sel, unsigned threads = 1) {
  if (ds.has_missing()) throw InputError("screen: covariates contain missing values; impute first");
  const FailureIndex idx = build_failure_index(ds);
  ScreeningResult res = detail::marginal_screen(ds.x(), Matrix(ds.n(), 0), idx, sel, threads);
  if (!res.failed.empty())
    res.warnings.push_back(std::to_string(res.failed.size()) + " marginal fit(s) did not converge; ranked last");
  return res;
}

}  // namespace farmhazard
