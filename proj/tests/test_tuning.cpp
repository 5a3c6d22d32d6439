#include "farmhazard/procedures.hpp"
#include "farmhazard/sim.hpp"
#include "farmhazard/tuning.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace farmhazard;

namespace {

struct Tiny {
  Vector z;
  IntVector d;
  Matrix x;
};

Tiny two_point() {
  Tiny t;
  t.z.resize(2);
  t.z << 1, 2;
  t.d.resize(2);
  t.d << 1, 0;
  t.x.resize(2, 1);
  t.x << 1, 0;
  return t;
}

}  // namespace

TEST(LambdaGrid, ShapeAndRatios) {
  const auto g = make_lambda_grid(2.0, 200, 50);
  ASSERT_EQ(g.values.size(), 100u);
  EXPECT_DOUBLE_EQ(g.values.front(), 2.0);
  EXPECT_NEAR(g.values.back(), 2.0 * 1e-4, 1e-15);
  for (std::size_t m = 1; m < g.values.size(); ++m) EXPECT_LT(g.values[m], g.values[m - 1]);
  EXPECT_NEAR(make_lambda_grid(2.0, 50, 200).values.back(), 0.02, 1e-15);
  const auto one = make_lambda_grid(3.0, 10, 5, 1);
  ASSERT_EQ(one.values.size(), 1u);
  EXPECT_DOUBLE_EQ(one.values[0], 3.0);
}

TEST(LambdaGrid, TwoPointInstance) {
  const Tiny t = two_point();
  const auto idx = build_failure_index(t.z, t.d);
  EXPECT_NEAR(lambda_max(t.x, idx, 1.0, Vector::Ones(1)), 0.25, 1e-15);
  EXPECT_NEAR(lambda_max(t.x, idx, 0.5, Vector::Ones(1)), 0.5, 1e-15);
}

TEST(LambdaGrid, DoublingCovariatesDoublesLambdaMax) {
  std::mt19937_64 rng(5);
  const auto r = oracle::random_instance(rng, 30, 4);
  const auto idx = build_failure_index(r.z, r.delta);
  Vector w = Vector::Ones(4);
  w[3] = 0.0;  // one unpenalized coordinate
  Matrix x2 = r.x;
  x2.leftCols(3) *= 2.0;
  EXPECT_NEAR(lambda_max(x2, idx, 1.0, w), 2.0 * lambda_max(r.x, idx, 1.0, w), 1e-9);
}

TEST(LambdaGrid, ZeroDesignIsDegenerate) {
  std::mt19937_64 rng(5);
  const auto r = oracle::random_instance(rng, 10, 2);
  const auto idx = build_failure_index(r.z, r.delta);
  const auto g = lambda_grid(Matrix::Zero(10, 2), idx, 1.0, Vector::Ones(2));
  ASSERT_EQ(g.values.size(), 1u);
  EXPECT_EQ(g.values[0], 0.0);
  EXPECT_FALSE(g.warnings.empty());
}

TEST(Path, MonotoneSupportEntryAndNullStart) {
  Rng rng(3);
  const Matrix x = normal_matrix(80, 10, 1.0, rng);
  Vector beta = Vector::Zero(10);
  beta.head(3) << 1.0, -1.0, 0.5;
  const auto s = gen_survival(x, beta, rng);
  const auto idx = build_failure_index(s.z, s.delta);
  const auto grid = lambda_grid(x, idx, 1.0, Vector::Ones(10), 30);
  PathOptions po;
  po.early_stop = false;
  const auto path = fit_path(x, idx, 1.0, constant_weights(Vector::Ones(10)), grid.values, po);
  ASSERT_EQ(path.fits.size(), 30u);
  EXPECT_EQ(model_size(path.fits.front().theta_hat), 0);
  EXPECT_GE(model_size(path.fits.back().theta_hat), 3);
  for (const auto& f : path.fits) EXPECT_TRUE(f.converged);
}

TEST(Folds, StratifiedAndDeterministic) {
  IntVector d(40);
  for (Index i = 0; i < 40; ++i) d[i] = i % 4 == 0 ? 0 : 1;
  const auto a = make_folds(d, 5, 9);
  EXPECT_EQ(a, make_folds(d, 5, 9));
  EXPECT_NE(a, make_folds(d, 5, 10));
  std::vector<int> ev(5, 0), all(5, 0);
  for (Index i = 0; i < 40; ++i) {
    ++all[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])];
    ev[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])] += d[i];
  }
  for (int f = 0; f < 5; ++f) {
    EXPECT_EQ(all[static_cast<std::size_t>(f)], 8);
    EXPECT_EQ(ev[static_cast<std::size_t>(f)], 6);
  }
  EXPECT_THROW(make_folds(d, 1, 0), InputError);
  EXPECT_THROW(make_folds(d, 41, 0), InputError);
  IntVector one = IntVector::Zero(5);
  one[2] = 1;
  EXPECT_THROW(make_folds(one, 5, 0), InputError);
}

TEST(Cv, SingletonGridPicksIt) {
  std::mt19937_64 rng(8);
  const auto r = oracle::random_instance(rng, 30, 3);
  const auto idx = build_failure_index(r.z, r.delta);
  const double lm = lambda_max(r.x, idx, 1.0, Vector::Ones(3));
  const auto cv = cv_path(r.x, r.z, r.delta, 1.0, constant_weights(Vector::Ones(3)), {lm}, make_folds(r.delta, 3, 1));
  EXPECT_DOUBLE_EQ(cv.lambda_star, lm);
  EXPECT_EQ(cv.best_index, 0);
}

TEST(Cv, LeaveOneOutMatchesIndependentLoop) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 3; ++rep) {
    const Index n = 10 + rep;
    auto r = oracle::random_instance(rng, n, 2);
    r.delta[1] = 1;
    const auto idx = build_failure_index(r.z, r.delta);
    const auto grid = lambda_grid(r.x, idx, 1.0, Vector::Ones(2), 6, 0.05).values;
    std::vector<int> folds(static_cast<std::size_t>(n));
    std::iota(folds.begin(), folds.end(), 0);
    PathOptions po;
    po.early_stop = false;
    po.solver.kkt_rel_tol = 1e-10;
    const auto cv = cv_path(r.x, r.z, r.delta, 1.0, constant_weights(Vector::Ones(2)), grid, folds, po);
    ASSERT_EQ(cv.cv_curve.size(), grid.size());

    for (std::size_t m = 0; m < grid.size(); ++m) {
      double total = 0.0;
      for (Index out = 0; out < n; ++out) {
        std::vector<Index> keep;
        for (Index i = 0; i < n; ++i)
          if (i != out) keep.push_back(i);
        const Matrix xt = r.x(keep, Eigen::all);
        const Vector zt = r.z(keep);
        const IntVector dt = r.delta(keep);
        SolverOptions so;
        so.kkt_rel_tol = 1e-10;
        const auto fit = fit_weighted_enet_cox(xt, build_failure_index(zt, dt), unit_penalty(2, grid[m]), std::nullopt, so);
        const double q_full = -static_cast<double>(n) * oracle::naive_loss(r.x, fit.theta_hat, r.z, r.delta);
        const double q_train = -static_cast<double>(n - 1) * oracle::naive_loss(xt, fit.theta_hat, zt, dt);
        total += q_full - q_train;
      }
      EXPECT_NEAR(cv.cv_curve[m], total, 1e-6 * std::max(1.0, std::abs(total))) << "rep " << rep << " m " << m;
    }
  }
}

TEST(Cv, SelectionRules) {
  const std::vector<double> curve{-10.0, -6.0, -5.0, -5.5};
  const std::vector<double> se{1.0, 1.5, 1.2, 1.0};
  EXPECT_EQ(select_index(curve, se, SelectionRule::min), 2);
  EXPECT_EQ(select_index(curve, se, SelectionRule::one_se), 1);
  EXPECT_EQ(select_index({-1.0, -1.0}, {}, SelectionRule::min), 0);
  EXPECT_EQ(parse_criterion("refit"), Criterion::refit);
  EXPECT_THROW(parse_criterion("gcv"), InputError);
}

TEST(Cv, SupportRefitIsUnpenalizedOnSupport) {
  Rng rng(6);
  const Matrix x = normal_matrix(100, 6, 1.0, rng);
  Vector beta = Vector::Zero(6);
  beta.head(2) << 1.0, -1.0;
  const auto s = gen_survival(x, beta, rng);
  const auto idx = build_failure_index(s.z, s.delta);
  const double lm = lambda_max(x, idx, 1.0, Vector::Ones(6));
  const auto fit = fit_weighted_enet_cox(x, idx, unit_penalty(6, 0.3 * lm));
  const auto refit = support_refit(x, idx, fit, {});
  ASSERT_TRUE(refit.has_value());
  std::vector<Index> supp;
  for (Index j = 0; j < 6; ++j) {
    EXPECT_EQ((*refit)[j] != 0.0, fit.theta_hat[j] != 0.0);
    if (fit.theta_hat[j] != 0.0) supp.push_back(j);
  }
  ASSERT_FALSE(supp.empty());
  const Vector oracle_theta = oracle::newton_mle(x(Eigen::all, supp), s.z, s.delta);
  EXPECT_LT((Vector((*refit)(supp)) - oracle_theta).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Cv, DeterministicForSeed) {
  Rng rng(15);
  const Matrix x = normal_matrix(60, 8, 1.0, rng);
  Vector beta = Vector::Zero(8);
  beta[0] = 1.0;
  const auto s = gen_survival(x, beta, rng);
  const SurvivalDataset ds(s.z, s.delta, x);
  ProcedureOptions o;
  o.grid_points = 20;
  const auto a = cv_select_lambda(ds, Method::lasso, 5, 3, o);
  const auto b = cv_select_lambda(ds, Method::lasso, 5, 3, o);
  EXPECT_EQ(a.lambda_star, b.lambda_star);
  EXPECT_EQ(a.cv_curve, b.cv_curve);
  o.threads = 3;
  const auto c = cv_select_lambda(ds, Method::lasso, 5, 3, o);
  EXPECT_EQ(a.cv_curve, c.cv_curve);
}

TEST(Cv, NullModelSelectsFewCovariates) {
  double total = 0.0;
  const int reps = 10;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng = replication_rng(44, static_cast<std::uint64_t>(rep));
    const Matrix x = normal_matrix(200, 50, 1.0, rng);
    const auto s = gen_survival(x, Vector::Zero(50), rng);
    ProcedureOptions o;
    o.grid_points = 50;
    const auto fit = MethodSuite(SurvivalDataset(s.z, s.delta, x), o).fit(Method::lasso);
    total += static_cast<double>(model_size(fit.beta_hat));
  }
  EXPECT_LT(total / reps, 3.0);
}
