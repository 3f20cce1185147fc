#pragma once

#include <optional>
#include <vector>

#include "mcemssm/linalg.hpp"

namespace mcemssm {

struct ArimaOrder {
  int p = 0;
  int d = 0;
  int q = 0;
};

struct ArimaFit {
  ArimaOrder order;
  std::vector<double> ar;  // phi, stationary part
  std::vector<double> ma;  // psi
  double mean = 0.0;       // subtracted level (d = 0 only)
  double sigma2 = 1.0;
  double loglik = 0.0;     // conditional Gaussian log-likelihood
  double aicc = 0.0;
};

/// Fits a single ARIMA(p,d,q) by maximum likelihood through the
/// model's state-space form; missing observations (NaN) are skipped
/// in the filter. Returns nullopt when the optimizer fails to produce
/// a finite likelihood.
std::optional<ArimaFit> fit_arima(const std::vector<double>& y, ArimaOrder order);

/// Grid-searches orders by corrected AIC and imputes missing entries
/// by the smoothed state means. Falls back to linear interpolation
/// when no order converges.
struct ArimaImputation {
  std::vector<double> imputed;  // full series, observed entries untouched
  std::optional<ArimaFit> model;
  bool fallback_linear = false;
};
ArimaImputation impute_arima(const std::vector<double>& y,
                             const std::vector<std::uint8_t>& observed,
                             int max_p = 3, int max_d = 1, int max_q = 3);

}  // namespace mcemssm
