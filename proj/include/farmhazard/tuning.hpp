#pragma once

// Regularization paths and lambda selection by cross-validated partial
// likelihood.

#include "farmhazard/core.hpp"
#include "farmhazard/cox.hpp"
#include "farmhazard/dataset.hpp"
#include "farmhazard/parallel.hpp"
#include "farmhazard/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace farmhazard {

struct LambdaGrid {
  std::vector<double> values;  // strictly decreasing, values[0] = lambda_max
  std::vector<std::string> warnings;
};

/// `n_points` log-spaced values from lambda_max down to ratio * lambda_max,
/// ratio = 0.01 when n < d and 1e-4 otherwise.
inline LambdaGrid make_lambda_grid(double lmax, Index n, Index d, Index n_points = 100,
                                   std::optional<double> min_ratio = std::nullopt) {
  LambdaGrid grid;
  if (!(lmax > 0.0)) {
    grid.values = {0.0};
    grid.warnings.push_back("lambda_max is 0: penalized gradient vanishes at the null model; path is degenerate");
    return grid;
  }
  const double ratio = min_ratio ? *min_ratio : (n < d ? 0.01 : 1e-4);
  if (n_points < 1) throw InputError("lambda grid: need at least one point");
  grid.values.resize(static_cast<std::size_t>(n_points));
  for (Index m = 0; m < n_points; ++m) {
    const double frac = n_points == 1 ? 0.0 : static_cast<double>(m) / static_cast<double>(n_points - 1);
    grid.values[static_cast<std::size_t>(m)] = lmax * std::pow(ratio, frac);
  }
  grid.values.front() = lmax;
  return grid;
}

inline LambdaGrid lambda_grid(const Matrix& design, const FailureIndex& idx, double alpha, const Vector& weights,
                              Index n_points = 100, std::optional<double> min_ratio = std::nullopt,
                              const SolverOptions& opts = {}) {
  return make_lambda_grid(lambda_max(design, idx, alpha, weights, opts), design.rows(), design.cols(), n_points,
                          min_ratio);
}

/// Penalty weights as a function of lambda (constant for LASSO / elastic net,
/// lambda-dependent for one-step LLA).
using WeightFn = std::function<Vector(double lambda)>;

inline WeightFn constant_weights(Vector w) {
  return [w = std::move(w)](double) { return w; };
}

struct PathOptions {
  SolverOptions solver;
  bool early_stop = true;
  double max_dev_ratio = 0.999;   // stop once this fraction of the null loss is explained
  double min_dev_change = 1e-5;   // stop when the explained fraction stalls
  Index min_points = 5;
  std::optional<Index> max_support;  // stop once more penalized coordinates are active
};

struct PathResult {
  std::vector<double> lambdas;
  std::vector<FitResult> fits;
};

/// Warm-started fits along a decreasing grid. With early stopping the path is
/// truncated once the explained fraction of the null loss saturates.
inline PathResult fit_path(const Matrix& design, const FailureIndex& idx, double alpha, const WeightFn& weights,
                           const std::vector<double>& grid, const PathOptions& opts = {},
                           std::optional<Vector> init = std::nullopt) {
  PathResult path;
  SolverOptions sopts = opts.solver;
  if (!sopts.grad0_norm) sopts.grad0_norm = gradient_norm_at_zero(design, idx);
  std::optional<Vector> warm = std::move(init);
  // Explained fraction is measured against the theta = 0 model.
  const double null_loss = loss_from_eta(Vector::Zero(design.rows()), idx);
  double prev_ratio = 0.0;
  for (std::size_t m = 0; m < grid.size(); ++m) {
    const double lam = grid[m];
    PenaltySpec pen{lam, alpha, weights(lam)};
    FitResult fit = fit_weighted_enet_cox(design, idx, pen, warm, sopts);
    warm = fit.theta_hat;
    const double ratio = null_loss > 0.0 ? 1.0 - fit.loss / null_loss : 0.0;
    const bool entered = fit.support_size() > 0;
    if (opts.max_support && fit.support_size() > *opts.max_support && !path.fits.empty()) break;
    path.lambdas.push_back(lam);
    path.fits.push_back(std::move(fit));
    if (opts.early_stop && static_cast<Index>(m + 1) >= opts.min_points && entered) {
      if (ratio > opts.max_dev_ratio || ratio - prev_ratio < opts.min_dev_change) break;
    }
    prev_ratio = ratio;
  }
  return path;
}

/// Stratified fold labels in [0, k): events and censored samples are shuffled
/// separately and dealt round-robin. Retries with a derived seed until every
/// training fold holds at least one event.
inline std::vector<int> make_folds(const IntVector& delta, int k_folds, std::uint64_t seed) {
  const Index n = delta.size();
  if (k_folds < 2) throw InputError("cross-validation: k_folds must be >= 2");
  if (k_folds > n) throw InputError("cross-validation: more folds than samples");
  for (int attempt = 0; attempt < 10; ++attempt) {
    std::seed_seq seq{seed, static_cast<std::uint64_t>(attempt), std::uint64_t{0xf01d}};
    std::mt19937_64 rng(seq);
    std::vector<Index> events, censored;
    for (Index i = 0; i < n; ++i) (delta[i] == 1 ? events : censored).push_back(i);
    std::shuffle(events.begin(), events.end(), rng);
    std::shuffle(censored.begin(), censored.end(), rng);
    std::vector<int> folds(static_cast<std::size_t>(n));
    int next = 0;
    for (Index i : events) folds[static_cast<std::size_t>(i)] = (next++) % k_folds;
    for (Index i : censored) folds[static_cast<std::size_t>(i)] = (next++) % k_folds;
    const Index total = static_cast<Index>(events.size());
    std::vector<Index> fold_events(static_cast<std::size_t>(k_folds), 0);
    for (Index i : events) ++fold_events[static_cast<std::size_t>(folds[static_cast<std::size_t>(i)])];
    bool ok = true;
    for (int f = 0; f < k_folds; ++f) ok = ok && total - fold_events[static_cast<std::size_t>(f)] >= 1;
    if (ok) return folds;
  }
  throw InputError("cross-validation: could not form folds whose training parts all contain an event");
}

struct CvResult {
  double lambda_star = 0.0;
  Index best_index = 0;
  std::vector<double> lambdas;   // grid prefix shared by every fold
  std::vector<double> cv_curve;  // summed held-out partial log-likelihood per lambda
  std::vector<double> cv_se;     // standard error of cv_curve across folds (empty for gcv)
  std::vector<int> fold_ids;
  Index min_index = 0;           // maximizer of cv_curve
};

enum class SelectionRule { min, one_se };

/// Index chosen on a curve (larger is better). one_se takes the largest lambda
/// whose value is within one standard error of the maximum.
inline Index select_index(const std::vector<double>& curve, const std::vector<double>& se, SelectionRule rule) {
  Index best = 0;
  for (std::size_t m = 1; m < curve.size(); ++m)
    if (curve[m] > curve[static_cast<std::size_t>(best)]) best = static_cast<Index>(m);
  if (rule == SelectionRule::min || se.empty()) return best;
  const double bar = curve[static_cast<std::size_t>(best)] - se[static_cast<std::size_t>(best)];
  for (Index m = 0; m <= best; ++m)
    if (curve[static_cast<std::size_t>(m)] >= bar) return m;
  return best;
}

enum class Criterion {
  deviance,  // held-out deviance of the penalized fold fit
  refit,     // held-out deviance of the unpenalized refit on the fold fit's support
};

inline const char* criterion_name(Criterion c) { return c == Criterion::refit ? "refit" : "deviance"; }

inline Criterion parse_criterion(const std::string& s) {
  if (s == "deviance") return Criterion::deviance;
  if (s == "refit") return Criterion::refit;
  throw InputError("unknown criterion '" + s + "' (expected deviance or refit)");
}

/// Unpenalized fit restricted to the support of `fit` (nonzero or
/// unpenalized coordinates), returned at full length. Empty optional when the
/// refit fails numerically.
inline std::optional<Vector> support_refit(const Matrix& design, const FailureIndex& idx, const FitResult& fit,
                                           const SolverOptions& opts) {
  std::vector<Index> s;
  for (Index j = 0; j < fit.theta_hat.size(); ++j)
    if (fit.theta_hat[j] != 0.0 || !fit.penalty.penalized(j)) s.push_back(j);
  Vector out = Vector::Zero(fit.theta_hat.size());
  if (s.empty()) return out;
  try {
    const Matrix ws = design(Eigen::all, s);
    const FitResult r = fit_weighted_enet_cox(ws, idx, PenaltySpec{0.0, 1.0, Vector::Zero(ws.cols())},
                                              Vector(fit.theta_hat(s)), opts);
    if (!r.theta_hat.allFinite()) return std::nullopt;
    out(s) = r.theta_hat;
    return out;
  } catch (const NumericalError&) {
    return std::nullopt;
  }
}

/// Held-out criterion for a fold-trained theta:
///   Q_full(W theta) - Q_train(W_train theta),
/// with Q the log partial likelihood. Summed over folds; the maximizer wins
/// (earliest, i.e. largest, lambda on ties).
inline CvResult cv_path(const Matrix& design, const Vector& z, const IntVector& delta, double alpha,
                        const WeightFn& weights, const std::vector<double>& grid, const std::vector<int>& fold_ids,
                        const PathOptions& opts = {}, unsigned threads = 1,
                        SelectionRule rule = SelectionRule::min, Criterion criterion = Criterion::deviance) {
  const Index n = design.rows();
  if (static_cast<Index>(fold_ids.size()) != n) throw InputError("cross-validation: fold ids length mismatch");
  const int k_folds = fold_ids.empty() ? 0 : *std::max_element(fold_ids.begin(), fold_ids.end()) + 1;
  const FailureIndex full_idx = build_failure_index(z, delta);

  std::vector<std::vector<double>> per_fold(static_cast<std::size_t>(k_folds));
  parallel_for(static_cast<std::size_t>(k_folds), threads, [&](std::size_t f) {
    std::vector<Index> train;
    for (Index i = 0; i < n; ++i)
      if (fold_ids[static_cast<std::size_t>(i)] != static_cast<int>(f)) train.push_back(i);
    const Matrix w_train = design(train, Eigen::all);
    const Vector z_train = z(train);
    const IntVector d_train = delta(train);
    if (d_train.sum() == 0) throw InputError("cross-validation: training fold without events");
    const FailureIndex idx_train = build_failure_index(z_train, d_train);
    const PathResult path = fit_path(w_train, idx_train, alpha, weights, grid, opts);
    auto& out = per_fold[f];
    SolverOptions ropts = opts.solver;
    ropts.grad0_norm.reset();
    std::vector<char> last_support;
    double last_score = 0.0;
    for (const auto& fit : path.fits) {
      std::optional<Vector> theta = fit.theta_hat;
      if (criterion == Criterion::refit) {
        std::vector<char> support(static_cast<std::size_t>(fit.theta_hat.size()));
        for (Index j = 0; j < fit.theta_hat.size(); ++j) support[static_cast<std::size_t>(j)] = fit.theta_hat[j] != 0.0;
        if (!out.empty() && support == last_support) {
          out.push_back(last_score);
          continue;
        }
        last_support = support;
        theta = support_refit(w_train, idx_train, fit, ropts);
      }
      double score = -std::numeric_limits<double>::infinity();
      if (theta) {
        try {
          score = log_partial_likelihood(design * *theta, full_idx) - log_partial_likelihood(w_train * *theta, idx_train);
        } catch (const NumericalError&) {
        }
      }
      last_score = score;
      out.push_back(score);
    }
  });

  std::size_t len = grid.size();
  for (const auto& v : per_fold) len = std::min(len, v.size());
  CvResult res;
  res.fold_ids = fold_ids;
  res.lambdas.assign(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(len));
  res.cv_curve.assign(len, 0.0);
  res.cv_se.assign(len, 0.0);
  const double kf = static_cast<double>(per_fold.size());
  for (std::size_t m = 0; m < len; ++m) {
    for (const auto& v : per_fold) res.cv_curve[m] += v[m];
    // Sum of K fold terms: se = sqrt(K) * sd(fold terms).
    const double mean = res.cv_curve[m] / kf;
    double ss = 0.0;
    for (const auto& v : per_fold) ss += (v[m] - mean) * (v[m] - mean);
    res.cv_se[m] = kf > 1.0 && std::isfinite(ss) ? std::sqrt(kf * ss / (kf - 1.0)) : 0.0;
  }
  res.min_index = select_index(res.cv_curve, {}, SelectionRule::min);
  res.best_index = select_index(res.cv_curve, res.cv_se, rule);
  res.lambda_star = res.lambdas.empty() ? 0.0 : res.lambdas[static_cast<std::size_t>(res.best_index)];
  return res;
}

}  // namespace farmhazard
