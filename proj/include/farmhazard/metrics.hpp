#pragma once

// Evaluation statistics: concordance, sign recovery, model size, Wilson
// intervals and screening rates / ROC.

#include "farmhazard/core.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

namespace farmhazard {

/// Harrell's C. A pair is usable when the earlier member has an event; equal
/// times count only when exactly one member has the event (that member is
/// treated as earlier). Risk ties score 1/2. O(n log n) via a Fenwick tree
/// over risk ranks.
inline double c_index(const Vector& risk, const Vector& z, const IntVector& delta) {
  const Index n = risk.size();
  if (z.size() != n || delta.size() != n) throw InputError("c_index: length mismatch");
  if (n < 2) throw InputError("c_index: need at least two observations");

  std::vector<double> sorted_risk(risk.data(), risk.data() + n);
  std::sort(sorted_risk.begin(), sorted_risk.end());
  sorted_risk.erase(std::unique(sorted_risk.begin(), sorted_risk.end()), sorted_risk.end());
  const auto m = static_cast<Index>(sorted_risk.size());
  auto rank_of = [&](double r) {
    return static_cast<Index>(std::lower_bound(sorted_risk.begin(), sorted_risk.end(), r) - sorted_risk.begin()) + 1;
  };
  std::vector<double> tree(static_cast<std::size_t>(m + 1), 0.0);
  auto add = [&](Index i) {
    for (; i <= m; i += i & -i) tree[static_cast<std::size_t>(i)] += 1.0;
  };
  auto prefix = [&](Index i) {
    double s = 0.0;
    for (; i > 0; i -= i & -i) s += tree[static_cast<std::size_t>(i)];
    return s;
  };

  // Walk from the latest time down; the tree holds everything strictly later.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return z[a] > z[b]; });

  double conc = 0.0, usable = 0.0, inserted = 0.0;
  std::size_t g = 0;
  while (g < order.size()) {
    std::size_t e = g;
    while (e < order.size() && z[order[e]] == z[order[g]]) ++e;
    // Censored members of the tie block count as later than its events.
    std::vector<Index> tied_censored;
    for (std::size_t t = g; t < e; ++t)
      if (delta[order[t]] != 1) tied_censored.push_back(rank_of(risk[order[t]]));
    for (std::size_t t = g; t < e; ++t) {
      const Index i = order[t];
      if (delta[i] != 1) continue;
      const Index r = rank_of(risk[i]);
      const double below = prefix(r - 1);
      const double equal = prefix(r) - below;
      usable += inserted;
      conc += below + 0.5 * equal;
      for (Index rc : tied_censored) {
        usable += 1.0;
        conc += rc < r ? 1.0 : (rc == r ? 0.5 : 0.0);
      }
    }
    for (std::size_t t = g; t < e; ++t) {
      add(rank_of(risk[order[t]]));
      inserted += 1.0;
    }
    g = e;
  }
  if (usable == 0.0) throw InputError("c_index: no usable pairs");
  return conc / usable;
}

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

inline bool sign_consistency(const Vector& beta_hat, const Vector& beta_star) {
  if (beta_hat.size() != beta_star.size()) throw InputError("sign_consistency: length mismatch");
  for (Index j = 0; j < beta_hat.size(); ++j)
    if (sign_of(beta_hat[j]) != sign_of(beta_star[j])) return false;
  return true;
}

inline Index model_size(const Vector& beta_hat) {
  Index s = 0;
  for (Index j = 0; j < beta_hat.size(); ++j) s += beta_hat[j] != 0.0;
  return s;
}

struct BinomialCI {
  double rate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline BinomialCI wilson_interval(Index k, Index n, double confidence = 0.95) {
  if (n < 1 || k < 0 || k > n) throw InputError("wilson_interval: need 0 <= k <= n and n >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("wilson_interval: confidence must lie in (0, 1)");
  const boost::math::normal_distribution<double> nd;
  const double zq = boost::math::quantile(nd, 0.5 + 0.5 * confidence);
  const double nn = static_cast<double>(n);
  const double ph = static_cast<double>(k) / nn;
  const double z2 = zq * zq;
  const double center = (static_cast<double>(k) + z2 / 2.0) / (nn + z2);
  const double half = zq / (nn + z2) * std::sqrt(ph * (1.0 - ph) * nn + z2 / 4.0);
  BinomialCI ci;
  ci.rate = ph;
  ci.lower = std::max(0.0, center - half);
  ci.upper = std::min(1.0, center + half);
  if (k == 0) ci.lower = 0.0;
  if (k == n) ci.upper = 1.0;
  return ci;
}

/// Descending order of `scores`, ties by ascending index.
inline std::vector<Index> rank_descending(const Vector& scores) {
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  return order;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct ScreeningMetrics {
  double sure_rate = 0.0;
  double fnr_mean = 0.0;
  std::vector<RocPoint> roc;  // averaged over replications, d = 0..p
};

/// ROC of a single ranking as d sweeps 0..p.
inline std::vector<RocPoint> roc_curve(const std::vector<Index>& ranking, const std::vector<Index>& support, Index p) {
  const std::set<Index> truth(support.begin(), support.end());
  const double pos = static_cast<double>(truth.size());
  const double neg = static_cast<double>(p) - pos;
  std::vector<RocPoint> roc;
  roc.reserve(ranking.size() + 1);
  roc.push_back({0.0, 0.0});
  double tp = 0.0, fp = 0.0;
  for (Index j : ranking) {
    (truth.count(j) ? tp : fp) += 1.0;
    roc.push_back({neg > 0.0 ? fp / neg : 0.0, pos > 0.0 ? tp / pos : 0.0});
  }
  return roc;
}

inline double roc_auc(const std::vector<RocPoint>& roc) {
  double a = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    a += (roc[i].fpr - roc[i - 1].fpr) * 0.5 * (roc[i].tpr + roc[i - 1].tpr);
  return a;
}

/// `selected` holds one index set per replication; `rankings` (optional, same
/// length) gives the full rankings used for the ROC.
inline ScreeningMetrics screening_metrics(const std::vector<std::vector<Index>>& selected,
                                          const std::vector<Index>& support, Index p,
                                          const std::vector<std::vector<Index>>& rankings = {}) {
  if (support.empty()) throw InputError("screening_metrics: true support must be nonempty");
  ScreeningMetrics out;
  const double reps = static_cast<double>(selected.size());
  for (const auto& sel : selected) {
    const std::set<Index> s(sel.begin(), sel.end());
    Index missed = 0;
    for (Index j : support) missed += s.count(j) == 0;
    out.sure_rate += missed == 0 ? 1.0 : 0.0;
    out.fnr_mean += static_cast<double>(missed) / static_cast<double>(support.size());
  }
  if (reps > 0) {
    out.sure_rate /= reps;
    out.fnr_mean /= reps;
  }
  if (!rankings.empty()) {
    out.roc.assign(static_cast<std::size_t>(p + 1), RocPoint{});
    for (const auto& r : rankings) {
      const auto curve = roc_curve(r, support, p);
      for (std::size_t i = 0; i < curve.size() && i < out.roc.size(); ++i) {
        out.roc[i].fpr += curve[i].fpr / static_cast<double>(rankings.size());
        out.roc[i].tpr += curve[i].tpr / static_cast<double>(rankings.size());
      }
    }
  }
  return out;
}

/// Step interpolation of TPR at a given FPR (largest TPR reached at FPR <= x).
inline double tpr_at(const std::vector<RocPoint>& roc, double fpr) {
  double t = 0.0;
  for (const auto& pt : roc)
    if (pt.fpr <= fpr + 1e-15) t = std::max(t, pt.tpr);
  return t;
}

/// Fraction of an evenly spaced FPR grid where `a` is at least `b`.
inline double roc_dominance_fraction(const std::vector<RocPoint>& a, const std::vector<RocPoint>& b,
                                     int grid_points = 101) {
  int wins = 0;
  for (int g = 0; g < grid_points; ++g) {
    const double x = grid_points == 1 ? 0.0 : static_cast<double>(g) / (grid_points - 1);
    wins += tpr_at(a, x) >= tpr_at(b, x) - 1e-12;
  }
  return static_cast<double>(wins) / grid_points;
}

}  // namespace farmhazard
