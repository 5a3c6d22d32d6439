#pragma once

// Approximate factor model: pilot covariance, leading eigenstructure,
// loadings / factors / idiosyncratic components, and the adjusted eigenvalue
// thresholding (ACT) estimator of the number of factors.

#include "farmhazard/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace farmhazard {

/// Sample covariance of the column-centered matrix, 1/(n-1) normalization.
inline Matrix pilot_covariance(const Matrix& x2) {
  if (x2.rows() < 2) throw InputError("pilot_covariance: need at least 2 rows");
  const Matrix c = x2.rowwise() - x2.colwise().mean();
  Matrix s = c.transpose() * c / static_cast<double>(x2.rows() - 1);
  return 0.5 * (s + s.transpose());
}

/// Alternative pilot estimators (robust covariance, etc.) plug in here.
using PilotEstimator = std::function<Matrix(const Matrix&)>;

struct PilotEigen {
  Matrix sigma_hat;   // p2 x p2, may be empty when the Gram route was used
  Vector lambda_hat;  // k leading eigenvalues, descending
  Matrix gamma_hat;   // p2 x k orthonormal eigenvectors
};

namespace detail {

/// Flip each column so its largest-magnitude entry is positive.
inline void fix_signs(Matrix& vecs) {
  for (Index c = 0; c < vecs.cols(); ++c) {
    Index arg = 0;
    vecs.col(c).cwiseAbs().maxCoeff(&arg);
    if (vecs(arg, c) < 0.0) vecs.col(c) *= -1.0;
  }
}

}  // namespace detail

/// Leading k eigenpairs of a symmetric matrix, eigenvalues descending.
inline PilotEigen top_k_eigen(const Matrix& sigma_hat, Index k) {
  if (sigma_hat.rows() != sigma_hat.cols()) throw InputError("top_k_eigen: matrix must be square");
  if (k < 1 || k > sigma_hat.rows()) throw InputError("top_k_eigen: k out of range");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma_hat);
  if (es.info() != Eigen::Success) throw NumericalError("top_k_eigen: eigen-solver failed");
  PilotEigen out;
  out.sigma_hat = sigma_hat;
  out.lambda_hat = es.eigenvalues().tail(k).reverse();
  out.gamma_hat = es.eigenvectors().rightCols(k).rowwise().reverse();
  detail::fix_signs(out.gamma_hat);
  return out;
}

struct FactorDecomposition {
  Index k = 0;
  Matrix b_hat;        // p2 x k loadings, column j = sqrt(lambda_j) xi_j
  Matrix f_hat;        // n x k factors
  Matrix u_hat;        // n x p2 idiosyncratic components
  Vector lambda_hat;   // k leading eigenvalues of the pilot covariance
  Matrix gamma_hat;    // p2 x k eigenvectors
  Vector column_means; // means removed before decomposition
  std::vector<std::string> warnings;

  /// F B^T + U, i.e. the centered input.
  Matrix reconstruct() const { return f_hat * b_hat.transpose() + u_hat; }
};

/// Which eigen route `decompose` uses for the sample-covariance pilot.
enum class EigenRoute { automatic, covariance, gram };

namespace detail {

/// Leading eigenpairs of C^T C / (n-1) computed from the n x n Gram matrix
/// C C^T / (n-1); cheaper when p2 > n.
inline PilotEigen top_k_eigen_gram(const Matrix& centered, Index k) {
  const double denom = static_cast<double>(centered.rows() - 1);
  Matrix gram = centered * centered.transpose() / denom;
  gram = 0.5 * (gram + gram.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  if (es.info() != Eigen::Success) throw NumericalError("decompose: eigen-solver failed");
  PilotEigen out;
  out.lambda_hat = es.eigenvalues().tail(k).reverse();
  const Matrix v = es.eigenvectors().rightCols(k).rowwise().reverse();
  out.gamma_hat.resize(centered.cols(), k);
  for (Index j = 0; j < k; ++j) {
    const double lam = out.lambda_hat[j];
    if (lam > 0.0)
      out.gamma_hat.col(j) = centered.transpose() * v.col(j) / std::sqrt(denom * lam);
    else
      out.gamma_hat.col(j).setZero();
  }
  fix_signs(out.gamma_hat);
  return out;
}

}  // namespace detail

/// Fits the factor model to X2 with k factors:
///   B = (sqrt(l_1) xi_1, ..., sqrt(l_k) xi_k),  F = X2 B diag(1/l),  U = X2 - F B^T,
/// where X2 is column-centered first and (l, xi) are the leading eigenpairs of
/// the pilot covariance. If the trailing eigenvalues are numerically zero k is
/// reduced and a warning recorded.
inline FactorDecomposition decompose(const Matrix& x2, Index k, EigenRoute route = EigenRoute::automatic,
                                     const PilotEstimator& pilot = {}) {
  const Index n = x2.rows();
  const Index p2 = x2.cols();
  if (k < 0 || (k >= std::min(n, p2) && k > 0))
    throw InputError("decompose: k = " + std::to_string(k) + " must satisfy 1 <= k < min(n, p2) = " +
                     std::to_string(std::min(n, p2)));
  FactorDecomposition out;
  out.column_means = x2.colwise().mean().transpose();
  const Matrix centered = x2.rowwise() - out.column_means.transpose();
  if (k == 0) {
    out.b_hat.resize(p2, 0);
    out.f_hat.resize(n, 0);
    out.u_hat = centered;
    out.lambda_hat.resize(0);
    out.gamma_hat.resize(p2, 0);
    return out;
  }

  PilotEigen eig;
  if (pilot) {
    eig = top_k_eigen(pilot(x2), k);
  } else {
    const bool gram = route == EigenRoute::gram || (route == EigenRoute::automatic && p2 > n);
    eig = gram ? detail::top_k_eigen_gram(centered, k) : top_k_eigen(pilot_covariance(x2), k);
  }

  Index kk = k;
  const double l1 = eig.lambda_hat[0];
  while (kk > 0 && !(eig.lambda_hat[kk - 1] > 1e-10 * l1)) --kk;
  if (kk < k)
    out.warnings.push_back("decompose: reduced k from " + std::to_string(k) + " to " + std::to_string(kk) +
                           " because trailing eigenvalues are numerically zero");

  out.k = kk;
  out.lambda_hat = eig.lambda_hat.head(kk);
  out.gamma_hat = eig.gamma_hat.leftCols(kk);
  out.b_hat = out.gamma_hat * out.lambda_hat.cwiseSqrt().asDiagonal();
  out.f_hat = centered * out.b_hat * out.lambda_hat.cwiseInverse().asDiagonal();
  out.u_hat = centered - out.f_hat * out.b_hat.transpose();
  return out;
}

/// All eigenvalues of the sample correlation matrix, descending (length p2).
/// Uses the n x n Gram matrix when p2 > n; the remaining eigenvalues are zero.
inline Vector correlation_eigenvalues(const Matrix& x2) {
  const Index n = x2.rows();
  const Index p2 = x2.cols();
  Matrix y = x2.rowwise() - x2.colwise().mean();
  for (Index j = 0; j < p2; ++j) {
    const double sd = std::sqrt(y.col(j).squaredNorm() / static_cast<double>(n - 1));
    if (!(sd > 0.0))
      throw InputError("estimate_num_factors_act: column " + std::to_string(j) +
                       " has zero variance; standardize or drop it first");
    y.col(j) /= sd;
  }
  Vector ev = Vector::Zero(p2);
  if (p2 > n) {
    Matrix gram = y * y.transpose() / static_cast<double>(n - 1);
    gram = 0.5 * (gram + gram.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("estimate_num_factors_act: eigen-solver failed");
    ev.head(n) = es.eigenvalues().reverse();
  } else {
    Matrix r = y.transpose() * y / static_cast<double>(n - 1);
    r = 0.5 * (r + r.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(r, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("estimate_num_factors_act: eigen-solver failed");
    ev = es.eigenvalues().reverse();
  }
  return ev.cwiseMax(0.0);
}

/// Bias-corrected eigenvalues lambda^C_j = -1 / m_j(lambda_j) with
///   m_j(z)  = -(1 - rho_j) / z + rho_j * mbar_j(z),   rho_j = (p - j) / (n - 1),
///   mbar_j(z) = (p - j)^-1 [ sum_{l > j} (lambda_l - z)^-1 + ((3 lambda_j + lambda_{j+1}) / 4 - z)^-1 ].
/// Entry j is produced for every j whose eigenvalue is clearly nonzero and has a
/// successor (1-based j = 1 .. r - 1).
inline Vector act_corrected_eigenvalues(const Vector& eigenvalues, Index n) {
  const Index p = eigenvalues.size();
  if (p < 2) return Vector(0);
  const double top = eigenvalues[0];
  Index r = 0;
  while (r < p && eigenvalues[r] > 1e-10 * top) ++r;
  const Index m = std::max<Index>(0, std::min(r, p - 1));
  Vector out(m);
  for (Index j = 0; j < m; ++j) {
    const double z = eigenvalues[j];
    const double rest = static_cast<double>(p - (j + 1));
    double s = 0.0;
    for (Index l = j + 1; l < p; ++l) {
      const double diff = eigenvalues[l] - z;
      if (diff != 0.0) s += 1.0 / diff;
    }
    const double anchor = (3.0 * eigenvalues[j] + eigenvalues[j + 1]) / 4.0 - z;
    if (anchor != 0.0) s += 1.0 / anchor;
    const double mbar = s / rest;
    const double rho = rest / static_cast<double>(n - 1);
    const double mz = -(1.0 - rho) / z + rho * mbar;
    out[j] = -1.0 / mz;
  }
  return out;
}

/// Number of factors K = #{ j : lambda^C_j > 1 + sqrt(p2 / n) } computed on the
/// sample correlation matrix, so the result is unaffected by column scaling.
inline Index estimate_num_factors_act(const Matrix& x2) {
  const Index n = x2.rows();
  const Index p2 = x2.cols();
  if (n < 4) throw InputError("estimate_num_factors_act: need n >= 4");
  if (p2 < 2) throw InputError("estimate_num_factors_act: need p2 >= 2");
  const Vector corrected = act_corrected_eigenvalues(correlation_eigenvalues(x2), n);
  const double threshold = 1.0 + std::sqrt(static_cast<double>(p2) / static_cast<double>(n));
  Index k = 0;
  for (Index j = 0; j < corrected.size(); ++j)
    if (corrected[j] > threshold) ++k;
  return std::min<Index>(k, std::min(n, p2) - 1);
}

struct DecorrelationReport {
  double max_abs_corr_uu = 0.0;
  double max_abs_corr_uf = 0.0;
  double max_abs_corr_raw = 0.0;
};

namespace detail {

/// Column-standardized copy; columns whose sd falls below `floor` are zeroed
/// so they contribute zero correlation.
inline Matrix unit_columns(const Matrix& a, double floor) {
  Matrix c = a.rowwise() - a.colwise().mean();
  for (Index j = 0; j < c.cols(); ++j) {
    const double nrm = c.col(j).norm();
    if (nrm > floor * std::sqrt(static_cast<double>(std::max<Index>(1, c.rows() - 1))))
      c.col(j) /= nrm;
    else
      c.col(j).setZero();
  }
  return c;
}

inline double max_offdiag_abs(const Matrix& g) {
  double m = 0.0;
  for (Index j = 0; j < g.cols(); ++j)
    for (Index i = 0; i < j; ++i) m = std::max(m, std::abs(g(i, j)));
  return m;
}

}  // namespace detail

/// Largest absolute sample correlations among U columns, between U and F
/// columns, and among the raw (centered) X2 = F B^T + U columns.
inline DecorrelationReport decorrelation_report(const FactorDecomposition& dec) {
  const Matrix raw = dec.reconstruct();
  const double scale = raw.size() > 0 ? std::max(1.0, raw.cwiseAbs().maxCoeff()) : 1.0;
  const double floor = 1e-8 * scale;
  const Matrix u = detail::unit_columns(dec.u_hat, floor);
  const Matrix f = detail::unit_columns(dec.f_hat, floor);
  const Matrix x = detail::unit_columns(raw, floor);
  DecorrelationReport rep;
  rep.max_abs_corr_uu = detail::max_offdiag_abs(u.transpose() * u);
  rep.max_abs_corr_raw = detail::max_offdiag_abs(x.transpose() * x);
  if (f.cols() > 0 && u.cols() > 0) rep.max_abs_corr_uf = (u.transpose() * f).cwiseAbs().maxCoeff();
  return rep;
}

}  // namespace farmhazard
