#include "farmhazard/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace farmhazard;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

IntVector ivec(std::initializer_list<int> v) {
  IntVector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (int x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(CIndex, Examples) {
  EXPECT_DOUBLE_EQ(c_index(vec({3, 2, 1}), vec({1, 2, 3}), ivec({1, 1, 1})), 1.0);
  EXPECT_DOUBLE_EQ(c_index(vec({0.9, 0.5, 0.1}), vec({1, 2, 3}), ivec({1, 0, 1})), 1.0);
  EXPECT_DOUBLE_EQ(c_index(vec({0.1, 0.5, 0.9}), vec({1, 2, 3}), ivec({1, 0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(c_index(vec({1, 1, 1}), vec({1, 2, 3}), ivec({1, 1, 1})), 0.5);
}

TEST(CIndex, TimeTiesAndErrors) {
  // Equal times with one event: the event member counts as earlier.
  EXPECT_DOUBLE_EQ(c_index(vec({2, 1}), vec({1, 1}), ivec({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(c_index(vec({1, 2}), vec({1, 1}), ivec({1, 0})), 0.0);
  // Equal times with two events: unusable.
  EXPECT_THROW(c_index(vec({2, 1}), vec({1, 1}), ivec({1, 1})), InputError);
  EXPECT_THROW(c_index(vec({2, 1}), vec({1, 2}), ivec({0, 1})), InputError);
  EXPECT_THROW(c_index(vec({1}), vec({1}), ivec({1})), InputError);
}

TEST(CIndex, MatchesBruteForceOnSmallGrids) {
  std::mt19937_64 rng(1);
  int checked = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Index n = 2 + static_cast<Index>(rng() % 7);
    Vector risk(n), z(n);
    IntVector d(n);
    for (Index i = 0; i < n; ++i) {
      risk[i] = static_cast<double>(rng() % 4);
      z[i] = static_cast<double>(1 + rng() % 4);
      d[i] = static_cast<int>(rng() % 2);
    }
    const double brute = oracle::brute_force_c_index(risk, z, d);
    if (std::isnan(brute)) {
      EXPECT_THROW(c_index(risk, z, d), InputError);
      continue;
    }
    EXPECT_NEAR(c_index(risk, z, d), brute, 1e-14);
    ++checked;
  }
  EXPECT_GT(checked, 500);
}

TEST(CIndex, RankInvarianceAndNegation) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 40;
    Vector risk(n), z(n);
    IntVector d(n);
    for (Index i = 0; i < n; ++i) {
      risk[i] = nd(rng);
      z[i] = std::exp(nd(rng));
      d[i] = rng() % 3 != 0;
    }
    d[0] = 1;
    const double c = c_index(risk, z, d);
    const Vector mapped = risk.unaryExpr([](double v) { return std::exp(v); }).array() * 3.0 + risk.array().pow(3);
    EXPECT_NEAR(c_index(mapped, z, d), c, 1e-14);
    EXPECT_NEAR(c_index(-risk, z, d), 1.0 - c, 1e-14);
  }
}

TEST(SignAndSize, Examples) {
  EXPECT_TRUE(sign_consistency(vec({2, 0, -1}), vec({1, 0, -3})));
  EXPECT_FALSE(sign_consistency(vec({2, 0.001, -1}), vec({1, 0, -3})));
  EXPECT_TRUE(sign_consistency(vec({1, 0, -3}), vec({1, 0, -3})));
  EXPECT_THROW(sign_consistency(vec({1}), vec({1, 0})), InputError);
  EXPECT_EQ(model_size(Vector::Zero(5)), 0);
  EXPECT_EQ(model_size(vec({1, 0, 2})), 2);
}

TEST(Wilson, ExamplesAndSymmetry) {
  const auto full = wilson_interval(10, 10);
  EXPECT_NEAR(full.lower, 0.7224672, 1e-6);
  EXPECT_DOUBLE_EQ(full.upper, 1.0);
  const auto none = wilson_interval(0, 10);
  EXPECT_DOUBLE_EQ(none.lower, 0.0);
  EXPECT_NEAR(none.upper, 1.0 - full.lower, 1e-14);
  const double z = 1.959963984540054;
  const auto half = wilson_interval(5, 10);
  EXPECT_NEAR(0.5 * (half.lower + half.upper), (5 + z * z / 2) / (10 + z * z), 1e-12);
  for (Index n : {1, 7, 40, 200})
    for (Index k = 0; k <= n; ++k) {
      const auto a = wilson_interval(k, n);
      const auto b = wilson_interval(n - k, n);
      EXPECT_LE(a.lower, a.rate);
      EXPECT_GE(a.upper, a.rate);
      EXPECT_NEAR(a.lower, 1.0 - b.upper, 1e-12);
    }
  EXPECT_THROW(wilson_interval(3, 2), InputError);
  EXPECT_THROW(wilson_interval(1, 2, 1.0), InputError);
}

TEST(Screening, SureRateAndFnr) {
  const std::vector<Index> support{0, 1};
  const auto all = screening_metrics({{0, 1, 5}, {0, 1}}, support, 10);
  EXPECT_DOUBLE_EQ(all.sure_rate, 1.0);
  EXPECT_DOUBLE_EQ(all.fnr_mean, 0.0);
  const auto none = screening_metrics({{2, 3}, {4}}, support, 10);
  EXPECT_DOUBLE_EQ(none.sure_rate, 0.0);
  EXPECT_DOUBLE_EQ(none.fnr_mean, 1.0);
  const auto mixed = screening_metrics({{0, 1}, {0}}, support, 10);
  EXPECT_DOUBLE_EQ(mixed.sure_rate, 0.5);
  EXPECT_DOUBLE_EQ(mixed.fnr_mean, 0.25);
  EXPECT_THROW(screening_metrics({{0}}, {}, 3), InputError);
}

TEST(Screening, RocOfPerfectAndRandomRankings) {
  const auto perfect = roc_curve({0, 1, 2, 3, 4}, {0, 1}, 5);
  EXPECT_DOUBLE_EQ(roc_auc(perfect), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(roc_curve({4, 3, 2, 1, 0}, {0, 1}, 5)), 0.0);

  std::mt19937_64 rng(7);
  std::vector<std::vector<Index>> rankings, sel;
  const Index p = 200;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<Index> r(static_cast<std::size_t>(p));
    std::iota(r.begin(), r.end(), Index{0});
    std::shuffle(r.begin(), r.end(), rng);
    sel.emplace_back(r.begin(), r.begin() + 10);
    rankings.push_back(std::move(r));
  }
  const auto m = screening_metrics(sel, {0, 1, 2, 3}, p, rankings);
  ASSERT_EQ(m.roc.size(), static_cast<std::size_t>(p + 1));
  EXPECT_NEAR(roc_auc(m.roc), 0.5, 0.05);
  EXPECT_DOUBLE_EQ(roc_dominance_fraction(perfect, perfect), 1.0);
}

TEST(Ranking, StableTies) {
  EXPECT_EQ(rank_descending(vec({1, 3, 3, 0})), (std::vector<Index>{1, 2, 0, 3}));
}
