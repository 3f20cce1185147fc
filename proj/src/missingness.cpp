#include "mcemssm/missingness.hpp"

#include <cmath>

namespace mcemssm {

MissingPattern partition_timepoints(const std::vector<std::uint8_t>& y_observed, int q) {
  const int T = static_cast<int>(y_observed.size());
  MissingPattern p;
  for (int t = q + 1; t <= T; ++t) {
    if (!y_observed[t - 1]) {
      p.t_mis.insert(t);
      continue;
    }
    bool lag_missing = false;
    for (int l = 1; l <= q; ++l) {
      if (!y_observed[t - l - 1]) {
        lag_missing = true;
        break;
      }
    }
    (lag_missing ? p.t_obs1 : p.t_obs0).insert(t);
  }
  return p;
}

namespace {
double mean_probability(const VectorXd& lp, double intercept) {
  double s = 0.0;
  for (int i = 0; i < lp.size(); ++i) s += 1.0 / (1.0 + std::exp(-(intercept + lp(i))));
  return s / static_cast<double>(lp.size());
}
}  // namespace

double calibrate_intercept(const VectorXd& linear_predictors, double target_rate) {
  if (linear_predictors.size() == 0)
    throw std::invalid_argument("calibrate_intercept: empty predictor sample");
  if (target_rate <= 0.0 || target_rate >= 1.0)
    throw std::invalid_argument("calibrate_intercept: target rate must be in (0,1)");

  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double p = mean_probability(linear_predictors, mid);
    if (std::abs(p - target_rate) <= 1e-4) return mid;
    (p < target_rate ? lo : hi) = mid;
  }
  throw std::runtime_error("calibrate_intercept: no intercept reaches the target rate");
}

std::vector<std::uint8_t> generate_mask(const TimeSeriesDataset& complete_data,
                                        const MechanismConfig& cfg, Rng& rng) {
  complete_data.validate();
  const int T = complete_data.length();

  VectorXd lp = VectorXd::Zero(T);
  auto add_standardized = [&](const VectorXd& col, double slope) {
    if (slope == 0.0) return;
    double mu = col.mean();
    double sd = std::sqrt((col.array() - mu).square().sum() / std::max(1, T - 1));
    if (sd <= 0.0) return;
    lp += slope * (col.array() - mu).matrix() / sd;
  };

  switch (cfg.kind) {
    case Mechanism::MCAR:
      break;
    case Mechanism::MAR:
      for (int e = 0; e < complete_data.n_exposures(); ++e)
        add_standardized(complete_data.exposures.col(e), cfg.exposure_slope);
      for (int c = 0; c < complete_data.n_covariates(); ++c)
        add_standardized(complete_data.covariates.col(c), cfg.covariate_slope);
      break;
    case Mechanism::MNAR:
      add_standardized(complete_data.y, cfg.outcome_slope);
      break;
  }

  std::vector<std::uint8_t> observed(T, 1);
  if (cfg.target_rate <= 0.0) return observed;

  double intercept = calibrate_intercept(lp, cfg.target_rate);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < T; ++i) {
    double pr = 1.0 / (1.0 + std::exp(-(intercept + lp(i))));
    observed[i] = U(rng) < pr ? 0 : 1;
  }
  return observed;
}

}  // namespace mcemssm
