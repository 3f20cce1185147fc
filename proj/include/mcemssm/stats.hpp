#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mcemssm/linalg.hpp"

namespace mcemssm {

struct OlsFit {
  VectorXd coefficients;
  VectorXd standard_errors;
  double sigma2 = 0.0;       // residual variance, (n - p) denominator
  MatrixXd xtx_inverse;
  int n = 0;
};

/// Ordinary least squares with conventional standard errors. Throws
/// on rank deficiency, naming the first collinear column.
inline OlsFit ols_fit(const MatrixXd& X, const VectorXd& y) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n != y.size()) throw std::invalid_argument("ols_fit: row count mismatch");
  if (n <= p) throw std::invalid_argument("ols_fit: too few rows");

  MatrixXd xtx = X.transpose() * X;
  Eigen::FullPivLU<MatrixXd> lu(xtx);
  if (lu.rank() < p) {
    // Identify one offending column for the error message.
    for (int j = 0; j < p; ++j) {
      MatrixXd sub(n, p - 1);
      sub << X.leftCols(j), X.rightCols(p - 1 - j);
      Eigen::FullPivLU<MatrixXd> lu2(sub.transpose() * sub);
      if (lu2.rank() == lu.rank())
        throw std::runtime_error("ols_fit: rank-deficient design, column " +
                                 std::to_string(j) + " is collinear");
    }
    throw std::runtime_error("ols_fit: rank-deficient design");
  }

  OlsFit fit;
  fit.n = n;
  fit.xtx_inverse = lu.inverse();
  fit.coefficients = fit.xtx_inverse * (X.transpose() * y);
  VectorXd resid = y - X * fit.coefficients;
  fit.sigma2 = resid.squaredNorm() / static_cast<double>(n - p);
  fit.standard_errors =
      (fit.sigma2 * fit.xtx_inverse.diagonal()).cwiseMax(0.0).cwiseSqrt();
  return fit;
}

/// Empirical quantile with linear interpolation.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(v.begin(), v.end());
  double pos = q * (static_cast<double>(v.size()) - 1.0);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = static_cast<std::size_t>(std::ceil(pos));
  double h = pos - static_cast<double>(lo);
  return (1.0 - h) * v[lo] + h * v[hi];
}

inline double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace mcemssm
