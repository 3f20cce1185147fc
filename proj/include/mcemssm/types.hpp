#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcemssm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Outcome series with missing mask plus fully observed exposure and
/// covariate series. Time runs t = 1..T; storage is 0-based, so index
/// i corresponds to time t = i + 1.
struct TimeSeriesDataset {
  VectorXd y;                       // length T; entries at unobserved t are ignored
  std::vector<std::uint8_t> y_observed;  // length T; 1 = observed
  MatrixXd exposures;               // T x n_exposures
  MatrixXd covariates;              // T x n_covariates

  int length() const { return static_cast<int>(y.size()); }
  int n_exposures() const { return static_cast<int>(exposures.cols()); }
  int n_covariates() const { return static_cast<int>(covariates.cols()); }

  void validate() const {
    const int T = length();
    if (T == 0) throw std::invalid_argument("dataset: empty outcome series");
    if (static_cast<int>(y_observed.size()) != T)
      throw std::invalid_argument("dataset: mask length mismatch");
    if (exposures.size() > 0 && exposures.rows() != T)
      throw std::invalid_argument("dataset: exposure length mismatch");
    if (covariates.size() > 0 && covariates.rows() != T)
      throw std::invalid_argument("dataset: covariate length mismatch");
  }
};

enum class CoefficientRole { Static, RandomWalk, PeriodicStable };

/// Lag-order model specification. Base coefficient layout (before
/// periodic-segment expansion):
///   [0]                intercept
///   [1 .. q]           outcome lags 1..q
///   then per exposure  lags 0..p
///   then per covariate lags 0..o
struct ModelSpec {
  int q = 1;  // outcome lag order, >= 1
  int p = 0;  // exposure lag order, >= 0
  int o = 0;  // covariate lag order, >= 0
  int n_exposures = 0;
  int n_covariates = 0;
  std::vector<CoefficientRole> roles;  // one per base coefficient
  // Per periodic-stable base coefficient: strictly increasing interior
  // change points in 1..T (empty list = single segment).
  std::map<int, std::vector<int>> segments;

  int base_dim() const {
    return 1 + q + (p + 1) * n_exposures + (o + 1) * n_covariates;
  }

  void validate(int T) const {
    if (q < 1) throw std::invalid_argument("spec: q must be >= 1");
    if (p < 0 || o < 0) throw std::invalid_argument("spec: negative lag order");
    if (static_cast<int>(roles.size()) != base_dim())
      throw std::invalid_argument("spec: one role required per coefficient");
    for (const auto& [coef, cps] : segments) {
      if (coef < 0 || coef >= base_dim())
        throw std::invalid_argument("spec: segment list for unknown coefficient");
      if (roles[coef] != CoefficientRole::PeriodicStable)
        throw std::invalid_argument("spec: segments only allowed on periodic-stable coefficients");
      int prev = 1;
      for (int cp : cps) {
        if (cp <= prev || cp >= T)
          throw std::invalid_argument("spec: change points must be strictly increasing and interior");
        prev = cp;
      }
    }
  }

  /// Human-readable name of a base coefficient.
  std::string coefficient_name(int idx) const {
    if (idx == 0) return "intercept";
    if (idx <= q) return "y_lag" + std::to_string(idx);
    int k = idx - 1 - q;
    if (k < (p + 1) * n_exposures) {
      int e = k / (p + 1), lag = k % (p + 1);
      return "a" + std::to_string(e) + "_lag" + std::to_string(lag);
    }
    k -= (p + 1) * n_exposures;
    int c = k / (o + 1), lag = k % (o + 1);
    return "c" + std::to_string(c) + "_lag" + std::to_string(lag);
  }
};

/// Gaussian state belief (mean, covariance). Covariance is kept
/// symmetric by construction; eigenvalues may touch zero for
/// degenerate (static, Q = 0) coordinates.
struct GaussianBelief {
  VectorXd mean;
  MatrixXd cov;
};

/// Unknown parameter set of the state space model: initial state
/// prior, state innovation covariance, and scalar observation
/// variance. Q is diagonal with zeros pinned on static coordinates.
struct Theta {
  VectorXd mu0;
  MatrixXd sigma0;
  MatrixXd Q;
  double R = 1.0;

  int dim() const { return static_cast<int>(mu0.size()); }
};

/// Partition of analysis time points t = q+1..T by missingness status
/// (1-based time indices).
struct MissingPattern {
  std::set<int> t_mis;    // outcome missing
  std::set<int> t_obs0;   // outcome and all lag regressors observed
  std::set<int> t_obs1;   // outcome observed, some lag regressor missing

  int n_obs() const { return static_cast<int>(t_obs0.size() + t_obs1.size()); }
};

}  // namespace mcemssm
