#pragma once

// The five estimation procedures: LASSO, elastic net (alpha = 0.9), one-step
// LLA SCAD from the LASSO fit, FarmHazard-L (LASSO on the factor-augmented
// design with unpenalized factors) and FarmHazard-S (one-step LLA SCAD on the
// augmented design from the FarmHazard-L fit).

#include "farmhazard/core.hpp"
#include "farmhazard/cox.hpp"
#include "farmhazard/dataset.hpp"
#include "farmhazard/factor.hpp"
#include "farmhazard/solver.hpp"
#include "farmhazard/tuning.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace farmhazard {

enum class Method { lasso, elastic_net, scad, farmhazard_l, farmhazard_s };

inline constexpr std::array<Method, 5> kAllMethods{Method::farmhazard_s, Method::farmhazard_l, Method::lasso,
                                                    Method::scad, Method::elastic_net};

inline const char* method_name(Method m) {
  switch (m) {
    case Method::lasso: return "lasso";
    case Method::elastic_net: return "enet";
    case Method::scad: return "scad";
    case Method::farmhazard_l: return "farmhazard-l";
    case Method::farmhazard_s: return "farmhazard-s";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "lasso") return Method::lasso;
  if (s == "enet" || s == "elastic_net" || s == "elastic-net") return Method::elastic_net;
  if (s == "scad") return Method::scad;
  if (s == "farmhazard-l" || s == "farmhazard_l") return Method::farmhazard_l;
  if (s == "farmhazard-s" || s == "farmhazard_s") return Method::farmhazard_s;
  throw InputError("unknown method '" + s + "' (expected lasso, enet, scad, farmhazard-l, farmhazard-s)");
}

inline bool is_augmented(Method m) { return m == Method::farmhazard_l || m == Method::farmhazard_s; }

/// Design matrix handed to the solver plus the bookkeeping needed to map
/// coefficients back to the original covariates.
struct PreparedDesign {
  Matrix design;                  // penalized columns first, then factor columns
  Vector scale;                   // per design column: divisor applied to that column
  std::vector<Index> column_map;  // penalized design column -> original covariate
  Index p = 0;                    // original covariate count
  Index n_penalized = 0;
  Index k = 0;                    // factor columns
  Vector base_weights;            // 1 for penalized columns, 0 for factors
  std::optional<FactorDecomposition> factors;
  std::vector<std::string> warnings;

  Vector beta(const Vector& theta) const {
    Vector b = Vector::Zero(p);
    for (Index c = 0; c < n_penalized; ++c) b[column_map[static_cast<std::size_t>(c)]] = theta[c] / scale[c];
    return b;
  }
  Vector gamma(const Vector& theta) const {
    Vector g(k);
    for (Index c = 0; c < k; ++c) g[c] = theta[n_penalized + c] / scale[n_penalized + c];
    return g;
  }
};

namespace detail {

// Columns whose sd falls below 1e-10 * ref are numerically zero (e.g. exact
// factor structure) and are zeroed rather than blown up to unit scale.
inline void scale_columns(Matrix& m, Vector& scale, Index offset, bool standardize, double ref) {
  for (Index c = 0; c < m.cols(); ++c) {
    const double mean = m.col(c).mean();
    double s = std::sqrt((m.col(c).array() - mean).square().sum() / static_cast<double>(std::max<Index>(1, m.rows() - 1)));
    if (!(s > 1e-10 * ref)) {
      m.col(c).setZero();
      s = 1.0;
    } else if (!standardize) {
      s = 1.0;
    }
    m.col(c) /= s;
    scale[offset + c] = s;
  }
}

}  // namespace detail

/// Raw design: constant columns dropped, columns centered and (optionally)
/// scaled to unit sample sd.
inline PreparedDesign prepare_raw_design(const Matrix& x, bool standardize = true) {
  const Standardized st = farmhazard::standardize(x);
  PreparedDesign pd;
  pd.p = x.cols();
  pd.column_map = st.record.retained_columns;
  pd.n_penalized = static_cast<Index>(pd.column_map.size());
  pd.design = st.x;
  pd.scale = Vector::Ones(pd.n_penalized);
  for (Index c = 0; c < pd.n_penalized; ++c) {
    const double sd = st.record.sds[pd.column_map[static_cast<std::size_t>(c)]];
    if (standardize)
      pd.scale[c] = sd;
    else
      pd.design.col(c) *= sd;
  }
  pd.base_weights = Vector::Ones(pd.n_penalized);
  if (!st.record.dropped_constant_columns.empty())
    pd.warnings.push_back(std::to_string(st.record.dropped_constant_columns.size()) + " constant column(s) dropped");
  return pd;
}

/// Factor-augmented design (U, F). `k` absent means estimate it with ACT.
inline PreparedDesign prepare_augmented_design(const Matrix& x, std::optional<Index> k, bool standardize = true) {
  const Standardized st = farmhazard::standardize(x);
  const Matrix kept = x(Eigen::all, st.record.retained_columns);
  Index kk = k ? *k : (kept.cols() >= 2 && kept.rows() >= 4 ? estimate_num_factors_act(kept) : 0);
  kk = std::min<Index>(kk, std::max<Index>(0, std::min(kept.rows(), kept.cols()) - 1));
  FactorDecomposition dec = decompose(kept, kk);

  PreparedDesign pd;
  pd.p = x.cols();
  pd.column_map = st.record.retained_columns;
  pd.n_penalized = kept.cols();
  pd.k = dec.k;
  pd.design.resize(x.rows(), pd.n_penalized + pd.k);
  pd.design.leftCols(pd.n_penalized) = dec.u_hat;
  pd.design.rightCols(pd.k) = dec.f_hat;
  pd.scale = Vector::Ones(pd.design.cols());
  Matrix u = pd.design.leftCols(pd.n_penalized);
  Matrix f = pd.design.rightCols(pd.k);
  const double ref = std::max(1.0, st.record.sds.maxCoeff());
  detail::scale_columns(u, pd.scale, 0, standardize, ref);
  detail::scale_columns(f, pd.scale, pd.n_penalized, standardize, ref);
  pd.design.leftCols(pd.n_penalized) = u;
  pd.design.rightCols(pd.k) = f;
  pd.base_weights = Vector::Zero(pd.design.cols());
  pd.base_weights.head(pd.n_penalized).setOnes();
  pd.warnings = dec.warnings;
  if (!st.record.dropped_constant_columns.empty())
    pd.warnings.push_back(std::to_string(st.record.dropped_constant_columns.size()) + " constant column(s) dropped");
  pd.factors = std::move(dec);
  return pd;
}

struct ProcedureOptions {
  std::optional<Index> k;               // number of factors; ACT when absent
  bool standardize = true;
  double scad_a = 3.7;
  double enet_alpha = 0.9;
  Criterion criterion = Criterion::deviance;
  SelectionRule rule = SelectionRule::min;
  int cv_folds = 10;
  std::uint64_t seed = 1;
  Index grid_points = 100;
  std::optional<double> min_ratio;
  std::optional<double> lambda;         // fixed lambda, skips cross-validation
  std::optional<double> init_lambda;    // lambda of the LLA initializer when lambda is fixed
  PathOptions path;
  unsigned threads = 1;                 // fold-level parallelism
};

struct ProcedureFit {
  Method method = Method::lasso;
  double lambda = 0.0;
  Vector beta_hat;   // length p, original covariate scale
  Vector gamma_hat;  // factor coefficients (augmented methods)
  Vector theta;      // solver coordinates (design scale)
  Index k = 0;
  FitResult fit;
  std::optional<CvResult> cv;
  std::vector<double> grid;
  std::vector<std::string> warnings;
};

/// Fits any subset of the procedures on one dataset, sharing the prepared
/// designs, the factor decomposition and the LLA initializers between them.
class MethodSuite {
 public:
  MethodSuite(SurvivalDataset ds, ProcedureOptions opts) : ds_(std::move(ds)), opts_(std::move(opts)) {
    if (ds_.has_missing()) throw InputError("fit: covariates contain missing values; impute first");
    if (!ds_.zero_time_rows().empty())
      throw InputError("fit: " + std::to_string(ds_.zero_time_rows().size()) +
                       " observation(s) have zero follow-up time; remove them before fitting");
    idx_ = build_failure_index(ds_);
  }

  const SurvivalDataset& dataset() const { return ds_; }
  const FailureIndex& index() const { return idx_; }

  const PreparedDesign& raw_design() {
    if (!raw_) raw_ = std::make_unique<PreparedDesign>(prepare_raw_design(ds_.x(), opts_.standardize));
    return *raw_;
  }

  const PreparedDesign& augmented_design() {
    if (!aug_) aug_ = std::make_unique<PreparedDesign>(prepare_augmented_design(ds_.x(), opts_.k, opts_.standardize));
    return *aug_;
  }

  const ProcedureFit& fit(Method m) {
    auto it = fits_.find(m);
    if (it != fits_.end()) return it->second;
    ProcedureFit pf = compute(m, opts_.lambda);
    return fits_.emplace(m, std::move(pf)).first->second;
  }

 private:
  ProcedureFit compute(Method m, std::optional<double> fixed_lambda) {
    const bool aug = is_augmented(m);
    const PreparedDesign& pd = aug ? augmented_design() : raw_design();
    ProcedureFit pf;
    pf.method = m;
    pf.k = pd.k;
    pf.warnings = pd.warnings;

    const double alpha = m == Method::elastic_net ? opts_.enet_alpha : 1.0;
    WeightFn weights = constant_weights(pd.base_weights);
    if (m == Method::scad || m == Method::farmhazard_s) {
      const Method base = m == Method::scad ? Method::lasso : Method::farmhazard_l;
      Vector init;
      if (fixed_lambda)
        init = compute(base, opts_.init_lambda ? opts_.init_lambda : fixed_lambda).theta;
      else
        init = fit(base).theta;
      const Vector base_w = pd.base_weights;
      const double a = opts_.scad_a;
      weights = [init, base_w, a](double lam) { return lla_weights(init, base_w, lam, a); };
    }

    SolverOptions sopts = opts_.path.solver;
    sopts.grad0_norm = gradient_norm_at_zero(pd.design, idx_);
    PathOptions popts = opts_.path;
    popts.solver = sopts;

    if (fixed_lambda) {
      pf.lambda = *fixed_lambda;
      const Vector theta_u = fit_unpenalized_block(pd.design, idx_, weights(pf.lambda), sopts);
      pf.fit = fit_weighted_enet_cox(pd.design, idx_, PenaltySpec{pf.lambda, alpha, weights(pf.lambda)}, theta_u, sopts);
    } else {
      // The grid always comes from the unit-weight null model so LLA steps share
      // the LASSO lambda scale.
      const LambdaGrid grid =
          lambda_grid(pd.design, idx_, alpha, pd.base_weights, opts_.grid_points, opts_.min_ratio, sopts);
      pf.grid = grid.values;
      for (const auto& w : grid.warnings) pf.warnings.push_back(w);
      const std::vector<int> folds = make_folds(ds_.delta(), opts_.cv_folds, opts_.seed);
      CvResult cv = cv_path(pd.design, ds_.z(), ds_.delta(), alpha, weights, grid.values, folds, popts, opts_.threads,
                            opts_.rule, opts_.criterion);
      const std::vector<double> prefix(grid.values.begin(), grid.values.begin() + cv.best_index + 1);
      PathOptions full = popts;
      full.early_stop = false;
      full.max_support.reset();
      PathResult path = fit_path(pd.design, idx_, alpha, weights, prefix, full);
      pf.lambda = cv.lambda_star;
      pf.fit = std::move(path.fits.back());
      pf.cv = std::move(cv);
    }
    pf.theta = pf.fit.theta_hat;
    pf.beta_hat = pd.beta(pf.theta);
    pf.gamma_hat = pd.gamma(pf.theta);
    if (!pf.fit.converged) pf.warnings.push_back("solver did not converge at the selected lambda");
    return pf;
  }

  SurvivalDataset ds_;
  ProcedureOptions opts_;
  FailureIndex idx_;
  std::unique_ptr<PreparedDesign> raw_;
  std::unique_ptr<PreparedDesign> aug_;
  std::map<Method, ProcedureFit> fits_;
};

/// One procedure at a fixed lambda (no cross-validation). The LLA initializer
/// of scad / farmhazard-s is fitted at the same lambda unless
/// `options.init_lambda` is set.
inline ProcedureFit fit_procedure(Method method, const SurvivalDataset& ds, std::optional<Index> k, double lambda,
                                  ProcedureOptions options = {}) {
  options.k = k;
  options.lambda = lambda;
  MethodSuite suite(ds, options);
  return suite.fit(method);
}

/// Cross-validated lambda for one procedure.
inline CvResult cv_select_lambda(const SurvivalDataset& ds, Method method, int k_folds, std::uint64_t seed,
                                 ProcedureOptions options = {}) {
  options.cv_folds = k_folds;
  options.seed = seed;
  options.lambda.reset();
  MethodSuite suite(ds, options);
  return *suite.fit(method).cv;
}

}  // namespace farmhazard
