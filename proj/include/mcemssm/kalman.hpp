#pragma once

#include "mcemssm/design.hpp"
#include "mcemssm/linalg.hpp"
#include "mcemssm/types.hpp"

namespace mcemssm {

/// Forward pass output. States are indexed 0..n where state i > 0
/// belongs to rows[i-1] and state 0 is the prior (mu0, sigma0).
/// predicted[i] is the one-step-ahead belief of state i given data up
/// to row i-1; predicted[0] duplicates the prior.
struct FilterResult {
  std::vector<GaussianBelief> filtered;
  std::vector<GaussianBelief> predicted;
  double loglik = 0.0;  // one-step-ahead Gaussian log-density over observed rows
  int n_rows = 0;
};

struct SmootherResult {
  std::vector<GaussianBelief> smoothed;  // index 0..n
  std::vector<MatrixXd> lag_one;         // lag_one[i] = Cov(theta_i, theta_{i-1} | all), i = 1..n
};

/// Kalman filter with G = I and scalar observations. Rows must be
/// lag-filled; row_observed flags which rows carry an observed
/// outcome (the update is skipped elsewhere and the predicted belief
/// carried forward).
FilterResult kalman_filter(const Theta& theta, const std::vector<DesignRow>& rows,
                           const VectorXd& y_rows,
                           const std::vector<std::uint8_t>& row_observed);

/// Rauch-Tung-Striebel backward pass with lag-one covariances.
SmootherResult kalman_smoother(const Theta& theta, const FilterResult& fr);

/// Exact joint draw of theta_{0..n} given the filled data, by forward
/// filtering backward sampling. Returns an (n+1) x d matrix, one
/// state per row.
MatrixXd ffbs_sample(const Theta& theta, const FilterResult& fr, Rng& rng);

/// Conditional distribution of a missing outcome at row index
/// row_idx given the sampled state path and the row's (current)
/// regressor values: N(F_t theta_t, R).
struct OutcomePrediction {
  double mean = 0.0;
  double variance = 0.0;
};
OutcomePrediction predict_missing_outcome(const MatrixXd& state_path,
                                          const std::vector<DesignRow>& rows,
                                          const Theta& theta, int row_idx,
                                          const std::vector<std::uint8_t>& row_observed);

/// Complete-data log-likelihood (constants dropped); observation
/// terms sum over observed rows only. Singular sigma0 / Q blocks fall
/// back to pseudo-determinants over the free coordinates.
struct CompleteDataLogLik {
  double value = 0.0;
  bool pseudo_determinant_used = false;
};
CompleteDataLogLik complete_data_loglik(const Theta& theta, const MatrixXd& state_path,
                                        const std::vector<DesignRow>& rows,
                                        const VectorXd& y_rows,
                                        const std::vector<std::uint8_t>& row_observed);

}  // namespace mcemssm
