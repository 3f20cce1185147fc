#pragma once

#include "mcemssm/linalg.hpp"
#include "mcemssm/types.hpp"

namespace mcemssm {

enum class Mechanism { MCAR, MAR, MNAR };

/// Logistic missingness mechanism. MAR slopes act on standardized
/// (A_t, C_t); the MNAR slope acts on the standardized (complete)
/// outcome. Slopes are zero under MCAR.
struct MechanismConfig {
  Mechanism kind = Mechanism::MCAR;
  double target_rate = 0.5;
  double exposure_slope = 1.0;   // per exposure column (MAR)
  double covariate_slope = 1.0;  // per covariate column (MAR)
  double outcome_slope = 1.0;    // MNAR
  double intercept = 0.0;        // set by calibration
};

/// Partitions analysis time points q+1..T into fully observed,
/// partially observed (observed outcome, >= 1 missing lag regressor)
/// and missing, per the outcome mask.
MissingPattern partition_timepoints(const std::vector<std::uint8_t>& y_observed, int q);

/// Bisection on the logistic intercept so that the mean missingness
/// probability over the predictor sample equals target_rate (+- 1e-4).
/// linear_predictors holds the slope-weighted standardized predictor
/// sum per time point (zero vector for MCAR).
double calibrate_intercept(const VectorXd& linear_predictors, double target_rate);

/// Draws a Bernoulli missingness mask (true = missing) at the
/// calibrated rate. For MNAR the complete outcome series must be
/// supplied (simulation only).
std::vector<std::uint8_t> generate_mask(const TimeSeriesDataset& complete_data,
                                        const MechanismConfig& cfg, Rng& rng);

}  // namespace mcemssm
