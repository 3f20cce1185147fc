#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mcemssm/baselines.hpp"
#include "mcemssm/mcem.hpp"
#include "mcemssm/simulator.hpp"
#include "mcemssm/stats.hpp"
#include "oracle_joint.hpp"

using namespace mcemssm;

TEST_CASE("complete-data MCEM matches the OLS fixed point") {
  Rng rng(2024);
  DGPConfig dgp;
  dgp.T = 1000;
  SimulatedSeries sim = simulate_dgp(dgp, rng);

  ModelSpec spec = benchmark_spec(Regime::Stationary);
  MCEMConfig cfg;
  cfg.seed = 5;
  cfg.ci_chain_draws = 50;
  MCEMResult res = run_mcem(sim.data, spec, cfg);
  CHECK(res.converged);

  RegressionData reg = make_regression(sim.data, spec);
  OlsFit ols = ols_fit(reg.X, reg.y);
  REQUIRE(res.estimates.size() == ols.coefficients.size());
  for (int c = 0; c < res.estimates.size(); ++c)
    CHECK(std::abs(res.estimates(c) - ols.coefficients(c)) < 1e-3);
  CHECK(std::abs(res.theta_hat.R - ols.sigma2) / ols.sigma2 < 0.05);

  // Credible intervals bracket the point estimates.
  for (int c = 0; c < res.estimates.size(); ++c) {
    CHECK(res.intervals[c].lower < res.estimates(c));
    CHECK(res.intervals[c].upper > res.estimates(c));
  }
}

TEST_CASE("exact E-step returns the smoother moments") {
  Rng rng(3);
  oracle::Instance in = oracle::make_instance(rng, 0);
  MissingPattern pattern = partition_timepoints(in.data.y_observed, in.spec.q);
  VectorXd y_filled = in.data.y;
  RowData rd = make_row_data(in.data, in.em, pattern, y_filled);

  Rng chain_rng(1);
  EStepResult es = e_step(in.theta, in.em, rd, y_filled, 50, 5, chain_rng, true, false);
  CHECK(es.exact);
  CHECK(es.acc.draws == 0);

  FilterResult fr = kalman_filter(in.theta, rd.rows, rd.y_rows, rd.row_observed);
  SmootherResult sr = kalman_smoother(in.theta, fr);
  for (int i = 0; i <= es.acc.n; ++i) {
    CHECK((es.acc.theta_mean[i] - sr.smoothed[i].mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((es.acc.theta_cov[i] - sr.smoothed[i].cov).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("Gibbs E-step reproduces the exact conditional moments") {
  // Replicated chains: the spread of independent chain means
  // self-calibrates the Monte Carlo error, autocorrelation included.
  Rng rng(17);
  for (int rep = 0; rep < 3; ++rep) {
    oracle::Instance in = oracle::make_instance(rng, 2);
    MissingPattern pattern = partition_timepoints(in.data.y_observed, in.spec.q);

    VectorXd mean;
    MatrixXd cov;
    in.condition(in.T, mean, cov);

    const int K = 6, M = 4000;
    std::vector<std::map<int, double>> imp(K);
    std::vector<std::vector<VectorXd>> th_means(K);
    for (int k = 0; k < K; ++k) {
      VectorXd y_filled = in.data.y;
      for (int t : in.missing_times) y_filled(t - 1) = 0.0;
      RowData rd = make_row_data(in.data, in.em, pattern, y_filled);
      Rng chain_rng(static_cast<std::uint64_t>(1000 + 7 * k));
      EStepResult es =
          e_step(in.theta, in.em, rd, y_filled, M, 200, chain_rng, false, false);
      imp[k] = es.imputation_mean;
      th_means[k] = es.acc.theta_mean;
    }

    for (int t : in.missing_times) {
      double avg = 0.0;
      for (int k = 0; k < K; ++k) avg += imp[k].at(t);
      avg /= K;
      double sd = 0.0;
      for (int k = 0; k < K; ++k) sd += (imp[k].at(t) - avg) * (imp[k].at(t) - avg);
      sd = std::sqrt(sd / (K - 1));
      double se = sd / std::sqrt(static_cast<double>(K));
      double target = mean(in.y_offset(t));
      CHECK(std::abs(avg - target) <= 4.0 * se + 1e-3);
    }

    for (int i = 0; i <= in.n; ++i) {
      for (int b = 0; b < in.d; ++b) {
        double avg = 0.0;
        for (int k = 0; k < K; ++k) avg += th_means[k][i](b);
        avg /= K;
        double sd = 0.0;
        for (int k = 0; k < K; ++k)
          sd += (th_means[k][i](b) - avg) * (th_means[k][i](b) - avg);
        sd = std::sqrt(sd / (K - 1));
        double se = sd / std::sqrt(static_cast<double>(K));
        double target = mean(in.theta_offset(i) + b);
        CHECK(std::abs(avg - target) <= 4.0 * se + 1e-3);
      }
    }
  }
}

TEST_CASE("m_step agrees with a hand-built closed form on exact moments") {
  Rng rng(29);
  oracle::Instance in = oracle::make_instance(rng, 0);
  MissingPattern pattern = partition_timepoints(in.data.y_observed, in.spec.q);
  VectorXd y_filled = in.data.y;
  RowData rd = make_row_data(in.data, in.em, pattern, y_filled);
  Rng chain_rng(1);
  EStepResult es = e_step(in.theta, in.em, rd, y_filled, 10, 0, chain_rng, true, false);
  const MomentAccumulators& acc = es.acc;

  MStepResult ms = m_step(acc, in.em, rd);

  CHECK((ms.theta.mu0 - acc.theta_mean[0]).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ms.theta.sigma0 - acc.theta_cov[0]).cwiseAbs().maxCoeff() < 1e-12);

  const int n = acc.n;
  for (int c = 0; c < in.d; ++c) {
    double expect = 0.0;
    if (in.em.columns[c].random_walk) {
      for (int i = 1; i <= n; ++i) {
        double dm = acc.theta_mean[i](c) - acc.theta_mean[i - 1](c);
        expect += acc.theta_cov[i](c, c) + acc.theta_cov[i - 1](c, c) -
                  2.0 * acc.lag_one[i](c, c) + dm * dm;
      }
      expect = std::max(0.0, expect / n);
    }
    CHECK(ms.theta.Q(c, c) == doctest::Approx(expect).epsilon(1e-10));
    for (int c2 = 0; c2 < in.d; ++c2)
      if (c2 != c) CHECK(ms.theta.Q(c, c2) == 0.0);
  }

  double r_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const DesignRow& row = rd.rows[i];
    double resid = rd.y_rows(i) - row.values.dot(acc.theta_mean[i + 1]);
    r_sum += resid * resid + row.values.dot(acc.theta_cov[i + 1] * row.values);
  }
  CHECK(ms.theta.R == doctest::Approx(r_sum / n).epsilon(1e-10));
}

TEST_CASE("q_function is maximized at the m_step iterate") {
  Rng rng(31);
  oracle::Instance in = oracle::make_instance(rng, 0);
  MissingPattern pattern = partition_timepoints(in.data.y_observed, in.spec.q);
  VectorXd y_filled = in.data.y;
  RowData rd = make_row_data(in.data, in.em, pattern, y_filled);
  Rng chain_rng(1);
  EStepResult es = e_step(in.theta, in.em, rd, y_filled, 10, 0, chain_rng, true, false);

  Theta best = m_step(es.acc, in.em, rd).theta;
  double q_best = q_function(es.acc, best, in.em, rd);

  Theta worse = best;
  worse.R *= 1.4;
  CHECK(q_function(es.acc, worse, in.em, rd) < q_best);

  worse = best;
  worse.mu0(0) += 0.5;
  CHECK(q_function(es.acc, worse, in.em, rd) < q_best);

  worse = best;
  bool any_rw = false;
  for (int c = 0; c < in.d; ++c) {
    if (worse.Q(c, c) > 0.0) {
      worse.Q(c, c) *= 2.0;
      any_rw = true;
    }
  }
  if (any_rw) CHECK(q_function(es.acc, worse, in.em, rd) < q_best);
}

TEST_CASE("credible_interval is the empirical central interval") {
  std::vector<double> chain(1000);
  std::iota(chain.begin(), chain.end(), 0.0);
  CredibleInterval ci = credible_interval(chain, 0.95);
  CHECK(ci.lower == doctest::Approx(quantile(chain, 0.025)));
  CHECK(ci.upper == doctest::Approx(quantile(chain, 0.975)));
  CHECK(ci.lower < ci.upper);

  std::vector<double> tiny(19, 1.0);
  CHECK_THROWS_AS(credible_interval(tiny, 0.95), std::invalid_argument);
}

TEST_CASE("masked stationary fit recovers the coefficients") {
  Rng rng(404);
  DGPConfig dgp;
  dgp.T = 400;
  SimulatedSeries sim = simulate_dgp(dgp, rng);
  TimeSeriesDataset masked = sim.data;
  MechanismConfig mech;
  mech.target_rate = 0.3;
  masked.y_observed = generate_mask(sim.data, mech, rng);

  ModelSpec spec = benchmark_spec(Regime::Stationary);
  MCEMConfig cfg;
  cfg.seed = 9;
  cfg.max_outer_iterations = 12;
  cfg.m_max = 200;
  cfg.ci_chain_draws = 100;
  MCEMResult res = run_mcem(masked, spec, cfg);

  CHECK(std::abs(res.estimates(1) - dgp.rho) < 0.1);
  CHECK(std::abs(res.estimates(2) - dgp.beta1) < 0.15);
  CHECK(std::abs(res.estimates(3) - dgp.beta2) < 0.15);
  CHECK(std::abs(res.estimates(4) - dgp.betac) < 0.15);
  CHECK(res.theta_hat.R < 0.3);
  CHECK(res.theta_hat.R > 0.02);

  // Posterior means exist exactly for the masked analysis rows.
  MissingPattern pattern = partition_timepoints(masked.y_observed, spec.q);
  CHECK(res.imputations.size() == pattern.t_mis.size());
  for (int t : pattern.t_mis) {
    REQUIRE(res.imputations.count(t) == 1);
    CHECK(std::abs(res.imputations.at(t) - sim.data.y(t - 1)) < 5.0);
  }
}
