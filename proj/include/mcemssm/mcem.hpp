#pragma once

#include <map>
#include <optional>
#include <vector>

#include "mcemssm/changepoint.hpp"
#include "mcemssm/kalman.hpp"
#include "mcemssm/missingness.hpp"
#include "mcemssm/types.hpp"

namespace mcemssm {

struct MCEMConfig {
  int m_initial = 50;
  double m_growth_factor = 1.3;
  int m_max = 2000;
  int burn_in = 20;
  int max_outer_iterations = 30;
  double tol_loglik = 1e-4;   // relative change of the Q-function value
  double tol_params = 1e-3;   // max absolute parameter change
  int consecutive_passes = 3;
  double credible_level = 0.95;
  std::uint64_t seed = 1;

  // Initialization defaults
  double q_init = 1e-2;        // Q diagonal for random-walk coordinates
  double sigma0_scale = 10.0;  // diffuse initial state prior

  // Structural options
  bool update_mu0 = true;
  bool update_sigma0 = false;  // see decisions: sigma0 stays diffuse by default
  bool exact_complete_estep = true;  // exact smoother moments when nothing is missing
  int ci_chain_draws = 500;          // final chain length for credible intervals

  // Change-point refresh for periodic-stable coefficients
  double detect_q = 0.05;       // random-walk variance of the detection smoother
  int min_segment_length = 30;
  double penalty_scale = 1.0;   // multiplier on choose_penalty

  void validate() const {
    if (m_initial < 10) throw std::invalid_argument("mcem: m_initial must be >= 10");
    if (m_growth_factor < 1.0) throw std::invalid_argument("mcem: growth factor must be >= 1");
    if (tol_loglik <= 0 || tol_params <= 0) throw std::invalid_argument("mcem: tolerances must be > 0");
    if (credible_level <= 0 || credible_level >= 1)
      throw std::invalid_argument("mcem: credible level must be in (0,1)");
  }
};

/// Monte Carlo moment estimates feeding the M-step. Indices follow
/// the filter convention: state 0 is the initial state, state i > 0
/// belongs to rows[i-1].
struct MomentAccumulators {
  int n = 0;  // number of rows (transitions)
  int d = 0;
  int draws = 0;  // 0 marks exact smoother moments
  std::vector<VectorXd> theta_mean;  // theta~_i
  std::vector<MatrixXd> theta_cov;   // P~_i
  std::vector<MatrixXd> lag_one;     // P~_{i,i-1}, index i = 1..n

  // Per partially observed row: Monte Carlo moments of the missing
  // regressor contribution b = F^(1) theta^(1) and its covariance
  // with the observed contribution a = F^(0) theta^(0).
  struct Obs1Moments {
    int row = 0;
    double mean_mis = 0.0;  // E~[F^(1) theta^(1) | O_obs]
    double var_mis = 0.0;
    double cov_obs_mis = 0.0;
  };
  std::vector<Obs1Moments> obs1;
};

/// Row-level view of the data consumed by the E/M steps.
struct RowData {
  std::vector<DesignRow> rows;
  VectorXd y_rows;                           // outcome per row (0 where missing)
  std::vector<std::uint8_t> row_observed;
  std::vector<int> status;                   // 0 = obs0, 1 = obs1, 2 = missing
  std::vector<int> missing_rows;             // row indices with missing outcome
};

RowData make_row_data(const TimeSeriesDataset& data, const ExpandedModel& em,
                      const MissingPattern& pattern, const VectorXd& y_filled);

struct EStepResult {
  MomentAccumulators acc;
  std::map<int, double> imputation_mean;  // per missing time index
  MatrixXd state0_chain;                  // draws x d (empty unless requested)
  std::vector<MatrixXd> rw_chains;        // per random-walk column: draws x (n+1)
  std::vector<int> rw_columns;
  bool exact = false;
};

/// MCMC E-step: alternates FFBS state draws with missing-outcome
/// draws for burn_in + M sweeps and accumulates moments over the last
/// M. Mutates row_data lag slots and y_filled in place (the Gibbs
/// chain state). With no missing outcomes and exact_path set, moments
/// come from the smoother directly.
EStepResult e_step(const Theta& theta, const ExpandedModel& em, RowData& row_data,
                   VectorXd& y_filled, int M, int burn_in, Rng& rng,
                   bool exact_path, bool store_chain);

/// Closed-form M-step (Phi = G = I), followed by the structural
/// projection of Q (diagonal, zero on static coordinates) and
/// symmetrization. R is floored at 1e-8.
struct MStepResult {
  Theta theta;
  bool r_floored = false;
};
MStepResult m_step(const MomentAccumulators& acc, const ExpandedModel& em,
                   const RowData& row_data);

/// Monte Carlo estimate of the expected complete-data log-likelihood
/// at theta, from the accumulators of the current E-step.
double q_function(const MomentAccumulators& acc, const Theta& theta,
                  const ExpandedModel& em, const RowData& row_data);

struct CredibleInterval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Empirical central interval from a sampled chain; rejects chains
/// shorter than 20 draws.
CredibleInterval credible_interval(const std::vector<double>& chain, double level);

struct IterationRecord {
  int iteration = 0;
  int draws = 0;
  double q_value = 0.0;
  double max_param_delta = 0.0;
  double observed_loglik = 0.0;  // filter loglik at the iterate (filled data)
  double R = 0.0;
};

struct MCEMResult {
  Theta theta_hat;
  ExpandedModel model;
  bool converged = false;
  std::vector<IterationRecord> trace;

  // Per analysis row (t = q+1..T): smoothed base-coefficient value.
  MatrixXd trajectories;  // n x base_dim
  std::vector<int> row_times;

  // Per expanded column: point estimate and credible interval. For
  // random-walk columns the interval refers to the final state; the
  // per-time band is in rw_bands.
  VectorXd estimates;
  std::vector<CredibleInterval> intervals;
  std::map<int, MatrixXd> rw_bands;  // expanded column -> n x 2 (lower, upper)

  std::map<int, std::vector<int>> change_points;  // base coefficient -> detected
  std::map<int, double> imputations;              // posterior mean per missing t
};

MCEMResult run_mcem(const TimeSeriesDataset& data, const ModelSpec& spec,
                    const MCEMConfig& cfg);

}  // namespace mcemssm
