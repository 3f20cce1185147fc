#pragma once

#include <string>
#include <vector>

#include "mcemssm/arima.hpp"
#include "mcemssm/mcem.hpp"
#include "mcemssm/types.hpp"

namespace mcemssm {

enum class ImputeStrategy { Mean, Locf, Linear, Spline };

/// Dataset with the missing outcomes replaced. The original mask is
/// kept so imputed slots stay identifiable; data.y_observed is fully
/// set so downstream analysis treats the series as complete.
struct ImputedDataset {
  TimeSeriesDataset data;
  std::vector<std::uint8_t> originally_observed;
  std::string strategy;
  int draw_index = 0;
};

/// Single-series imputation: observed-sample mean, last observation
/// carried forward (back-filled leading gaps), linear interpolation
/// (nearest value at the edges), or natural cubic spline (edge
/// extrapolation clamped to the nearest observed value).
std::vector<double> impute_series(ImputeStrategy strategy, const std::vector<double>& y,
                                  const std::vector<std::uint8_t>& observed);

ImputedDataset impute(ImputeStrategy strategy, const TimeSeriesDataset& data);
ImputedDataset impute_with_arima(const TimeSeriesDataset& data, int max_p = 3,
                                 int max_d = 1, int max_q = 3);

/// Regression view of a (complete) dataset under the base coefficient
/// layout of spec: one row per t = q+1..T.
struct RegressionData {
  MatrixXd X;
  VectorXd y;
  std::vector<int> times;
  std::vector<std::string> names;
};
RegressionData make_regression(const TimeSeriesDataset& complete, const ModelSpec& spec);

/// Rows in T_obs^(0) only, with their true stored lag values.
RegressionData complete_case_filter(const TimeSeriesDataset& data, const ModelSpec& spec);

/// Chained-equations multiple imputation over the outcome column and
/// its lag columns: Bayesian linear regression per target column,
/// posterior-predictive draws, m independent chains.
struct MiceResult {
  std::vector<RegressionData> draws;       // analysis matrices, one per imputation
  std::vector<ImputedDataset> datasets;    // outcome-column based filled series
};
MiceResult impute_mice(const TimeSeriesDataset& data, const ModelSpec& spec, int m,
                       int cycles, Rng& rng);

struct FitSummary {
  std::vector<std::string> names;
  VectorXd estimates;
  VectorXd std_errors;
  VectorXd ci_lower;
  VectorXd ci_upper;
  int n = 0;
};

FitSummary analyze_ols(const RegressionData& reg);

/// Rubin's rules: pooled estimate = mean of estimates, total variance
/// = within + (1 + 1/m) between, normal-approximation CI.
FitSummary pool_rubin(const std::vector<FitSummary>& fits);

}  // namespace mcemssm
