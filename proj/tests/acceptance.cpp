// Acceptance harness: one line per criterion, nonzero exit on any
// failure. Every check runs with fixed seeds, so a green run is
// reproducible bitwise.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "mcemssm/baselines.hpp"
#include "mcemssm/changepoint.hpp"
#include "mcemssm/csv.hpp"
#include "mcemssm/kalman.hpp"
#include "mcemssm/mcem.hpp"
#include "mcemssm/missingness.hpp"
#include "mcemssm/simulator.hpp"
#include "mcemssm/stats.hpp"
#include "oracle_joint.hpp"

using namespace mcemssm;

namespace {

struct Failure {
  std::string what;
};

std::vector<std::string> g_notes;

void note(const std::string& s) { g_notes.push_back(s); }

#define REQUIRE_OK(cond, msg)                    \
  do {                                           \
    if (!(cond)) throw Failure{msg};             \
  } while (0)

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------- criterion 1

bool c1_oracle_equivalence() {
  Rng rng(101);
  int ffbs_checks = 0, ffbs_over4 = 0;
  double ffbs_worst = 0.0;

  for (int inst = 0; inst < 200; ++inst) {
    // Alternate complete and masked instances; masked ones carry up
    // to 3 missing outcomes.
    oracle::Instance in = oracle::make_instance(rng, inst % 2 ? 3 : 0);

    // The filter conditions on a fully augmented outcome series:
    // observed values plus a fixed fill at the missing times. For a
    // complete instance the fill map is empty and this is the data
    // itself; for a masked one it mirrors the sampler's inner step,
    // which treats the current imputations as observations. Exact
    // conditioning on the same augmented series is the matching
    // closed-form reference.
    oracle::Instance aug = in;
    std::map<int, double> fill;
    for (int t : in.missing_times) {
      fill[t] = in.data.y.mean() + 0.25 * t;
      aug.data.y(t - 1) = fill.at(t);
      aug.data.y_observed[t - 1] = 1;
    }
    std::vector<DesignRow> rows = build_design(aug.data, in.em, {});
    VectorXd y_rows = VectorXd::Zero(in.n);
    std::vector<std::uint8_t> row_observed(in.n, 1);
    for (int i = 0; i < in.n; ++i) y_rows(i) = aug.data.y(rows[i].t - 1);

    FilterResult fr = kalman_filter(in.theta, rows, y_rows, row_observed);
    SmootherResult sr = kalman_smoother(in.theta, fr);

    VectorXd mean;
    MatrixXd cov;
    for (int i = 0; i <= in.n; ++i) {
      aug.condition(1 + i, mean, cov);
      int off = in.theta_offset(i);
      REQUIRE_OK((fr.filtered[i].mean - mean.segment(off, in.d)).cwiseAbs().maxCoeff() <
                     1e-8,
                 "filter mean mismatch at instance " + std::to_string(inst));
      REQUIRE_OK(
          (fr.filtered[i].cov - cov.block(off, off, in.d, in.d)).cwiseAbs().maxCoeff() <
              1e-8,
          "filter covariance mismatch at instance " + std::to_string(inst));
    }
    aug.condition(in.T, mean, cov);
    for (int i = 0; i <= in.n; ++i) {
      int off = in.theta_offset(i);
      REQUIRE_OK((sr.smoothed[i].mean - mean.segment(off, in.d)).cwiseAbs().maxCoeff() <
                     1e-8,
                 "smoother mean mismatch at instance " + std::to_string(inst));
      REQUIRE_OK(
          (sr.smoothed[i].cov - cov.block(off, off, in.d, in.d)).cwiseAbs().maxCoeff() <
              1e-8,
          "smoother covariance mismatch at instance " + std::to_string(inst));
      if (i > 0) {
        MatrixXd cross = cov.block(in.theta_offset(i), in.theta_offset(i - 1), in.d, in.d);
        REQUIRE_OK((sr.lag_one[i] - cross).cwiseAbs().maxCoeff() < 1e-8,
                   "lag-one covariance mismatch at instance " + std::to_string(inst));
      }
    }

    if (in.missing_times.empty()) {
      // FFBS sampled moments against the smoother, 5000 draws.
      const int M = 5000;
      std::vector<VectorXd> sum(in.n + 1, VectorXd::Zero(in.d));
      std::vector<VectorXd> sum2(in.n + 1, VectorXd::Zero(in.d));
      for (int m = 0; m < M; ++m) {
        MatrixXd path = ffbs_sample(in.theta, fr, rng);
        for (int i = 0; i <= in.n; ++i) {
          sum[i] += path.row(i).transpose();
          sum2[i] += path.row(i).transpose().cwiseAbs2();
        }
      }
      for (int i = 0; i <= in.n; ++i) {
        for (int b = 0; b < in.d; ++b) {
          double mhat = sum[i](b) / M;
          double target = sr.smoothed[i].mean(b);
          double var = sr.smoothed[i].cov(b, b);
          double se = std::sqrt(std::max(var, 0.0) / M);
          double z = std::abs(mhat - target) / std::max(se, 1e-300);
          if (se == 0.0) {
            REQUIRE_OK(std::abs(mhat - target) < 1e-10, "FFBS fixed coordinate moved");
            continue;
          }
          ++ffbs_checks;
          ffbs_worst = std::max(ffbs_worst, z);
          if (z > 4.0) ++ffbs_over4;
          REQUIRE_OK(z <= 6.0, "FFBS mean off by " + num(z) + " MC standard errors");
          double vhat = sum2[i](b) / M - mhat * mhat;
          double vse = var * std::sqrt(2.0 / M);
          double vz = std::abs(vhat - var) / std::max(vse, 1e-300);
          ++ffbs_checks;
          ffbs_worst = std::max(ffbs_worst, vz);
          if (vz > 4.0) ++ffbs_over4;
          REQUIRE_OK(vz <= 6.0, "FFBS variance off by " + num(vz) + " MC standard errors");
        }
      }
    } else {
      // Gibbs posterior mean of the missing outcomes, 5000 total
      // draws split over replicate chains whose spread estimates the
      // Monte Carlo error with autocorrelation included.
      in.condition(in.T, mean, cov);  // observed outcomes only
      MissingPattern pattern = partition_timepoints(in.data.y_observed, in.spec.q);
      const int K = 8, M = 625;
      std::map<int, std::vector<double>> chain_means;
      for (int k = 0; k < K; ++k) {
        VectorXd y_filled = in.data.y;
        for (int t : in.missing_times) y_filled(t - 1) = in.data.y.mean();
        RowData rd = make_row_data(in.data, in.em, pattern, y_filled);
        Rng chain_rng(derive_seed(202, static_cast<std::uint64_t>(inst * 100 + k)));
        EStepResult es =
            e_step(in.theta, in.em, rd, y_filled, M, 100, chain_rng, false, false);
        for (const auto& [t, v] : es.imputation_mean) chain_means[t].push_back(v);
      }
      for (int t : in.missing_times) {
        const std::vector<double>& ms = chain_means.at(t);
        double avg = sample_mean(ms);
        double se = sample_sd(ms) / std::sqrt(static_cast<double>(K));
        double target = mean(in.y_offset(t));
        REQUIRE_OK(std::abs(avg - target) <= 4.0 * se + 2e-3,
                   "posterior mean of missing outcome off at instance " +
                       std::to_string(inst) + ": |" + num(avg) + " - " + num(target) +
                       "| > 4 se (" + num(se) + ")");
      }
    }
  }

  // Multiple-comparison allowance: with tens of thousands of 4-se
  // checks a handful of chance exceedances is expected for a correct
  // sampler; cap their share and the worst case instead.
  REQUIRE_OK(ffbs_over4 <= std::max(2, ffbs_checks / 1000),
             "too many FFBS moments beyond 4 MC standard errors: " +
                 std::to_string(ffbs_over4) + "/" + std::to_string(ffbs_checks));
  note("oracle: " + std::to_string(ffbs_checks) + " sampled-moment checks, worst z = " +
       num(ffbs_worst) + ", " + std::to_string(ffbs_over4) + " beyond 4 se");
  return true;
}

// ---------------------------------------------------------------- criterion 2

bool c2_complete_data_fixed_point() {
  Rng rng(4242);
  DGPConfig dgp;
  dgp.T = 1000;
  SimulatedSeries sim = simulate_dgp(dgp, rng);

  ModelSpec spec = benchmark_spec(Regime::Stationary);
  MCEMConfig cfg;
  cfg.seed = 7;
  cfg.ci_chain_draws = 100;
  MCEMResult res = run_mcem(sim.data, spec, cfg);
  REQUIRE_OK(res.converged, "complete-data fit did not converge");

  RegressionData reg = make_regression(sim.data, spec);
  OlsFit ols = ols_fit(reg.X, reg.y);
  for (int c = 0; c < res.estimates.size(); ++c)
    REQUIRE_OK(std::abs(res.estimates(c) - ols.coefficients(c)) < 1e-3,
               "coefficient " + std::to_string(c) + " differs from the least-squares "
               "fixed point by " + num(std::abs(res.estimates(c) - ols.coefficients(c))));
  REQUIRE_OK(std::abs(res.theta_hat.R - ols.sigma2) / ols.sigma2 < 0.05,
             "residual variance " + num(res.theta_hat.R) + " vs " + num(ols.sigma2));
  note("fixed point: max coefficient gap " +
       num((res.estimates - ols.coefficients).cwiseAbs().maxCoeff()));
  return true;
}

// ------------------------------------------------------- criteria 3/4 helpers

const ScenarioCell& find_cell(const ScenarioResult& r, const std::string& strategy,
                              const std::string& coefficient) {
  for (const ScenarioCell& c : r.cells)
    if (c.strategy == strategy && c.coefficient == coefficient) return c;
  throw Failure{"missing scenario cell " + strategy + "/" + coefficient};
}

ScenarioConfig stationary_benchmark_config() {
  ScenarioConfig sc;
  sc.dgp.T = 1000;
  sc.dgp.exo_ar = 0.8;
  sc.dgp.exo_outcome = 0.2;
  sc.mechanism.target_rate = 0.5;
  sc.mechanism.exposure_slope = 3.5;
  sc.mechanism.covariate_slope = 1.5;
  sc.strategies = {"cc", "mean", "locf", "linear", "spline", "arima", "mp", "mcem-ssm"};
  sc.n_reps = 100;
  sc.root_seed = 20260823;
  sc.mcem.max_outer_iterations = 15;
  sc.mcem.m_max = 300;
  sc.mcem.ci_chain_draws = 300;
  return sc;
}

// ---------------------------------------------------------------- criterion 3

bool c3_stationary_recovery() {
  const std::vector<std::string> principled = {"cc", "mp", "mcem-ssm"};
  const std::vector<std::string> naive = {"mean", "locf", "linear", "spline", "arima"};
  const std::vector<std::string> coefs = {"a0_lag0", "a0_lag1", "c0_lag0"};

  for (Mechanism mech : {Mechanism::MCAR, Mechanism::MAR}) {
    ScenarioConfig sc = stationary_benchmark_config();
    sc.mechanism.kind = mech;
    ScenarioResult res = run_scenario(sc);
    std::string tag = mechanism_name(mech);

    for (const std::string& s : principled) {
      REQUIRE_OK(res.failures.count(s) == 0 || res.failures.at(s) == 0,
                 tag + "/" + s + ": strategy failures");
      for (const std::string& coef : coefs) {
        const ScenarioCell& cell = find_cell(res, s, coef);
        REQUIRE_OK(std::abs(cell.bias) < 0.05, tag + "/" + s + "/" + coef + ": |bias| = " +
                                                   num(std::abs(cell.bias)) + " >= 0.05");
        REQUIRE_OK(cell.coverage >= 0.88 && cell.coverage <= 0.99,
                   tag + "/" + s + "/" + coef + ": coverage " + num(cell.coverage) +
                       " outside [0.88, 0.99]");
      }
    }
    for (const std::string& s : naive) {
      const ScenarioCell& cell = find_cell(res, s, "a0_lag1");
      REQUIRE_OK(cell.coverage < 0.5, tag + "/" + s + "/a0_lag1: coverage " +
                                          num(cell.coverage) + " >= 0.5");
    }
    note(std::string("stationary ") + tag + ": mcem-ssm a0_lag1 bias " +
         num(find_cell(res, "mcem-ssm", "a0_lag1").bias) + ", coverage " +
         num(find_cell(res, "mcem-ssm", "a0_lag1").coverage));
  }
  return true;
}

// ---------------------------------------------------------------- criterion 4

bool c4_nonstationary_recovery() {
  ScenarioConfig sc;
  sc.dgp.regime = Regime::Nonstationary;
  sc.dgp.T = 1000;
  sc.dgp.exo_ar = 0.8;
  sc.dgp.exo_outcome = 0.2;
  sc.mechanism.kind = Mechanism::MCAR;
  sc.mechanism.target_rate = 0.5;
  sc.strategies = {"mcem-ssm", "cc", "mp"};
  sc.n_reps = 50;
  sc.root_seed = 20260824;
  sc.mcem.max_outer_iterations = 12;
  sc.mcem.m_max = 200;
  sc.mcem.ci_chain_draws = 100;
  sc.mice_m = 5;
  ScenarioResult res = run_scenario(sc);

  REQUIRE_OK(res.failures.count("mcem-ssm") == 0 || res.failures.at("mcem-ssm") == 0,
             "mcem-ssm: strategy failures");
  const ScenarioCell& own = find_cell(res, "mcem-ssm", "a0_lag1");
  REQUIRE_OK(std::abs(own.bias) < 0.07,
             "mcem-ssm a0_lag1: |bias| = " + num(std::abs(own.bias)) + " >= 0.07");
  REQUIRE_OK(own.coverage >= 0.85 && own.coverage <= 1.0,
             "mcem-ssm a0_lag1: coverage " + num(own.coverage) + " outside [0.85, 1]");

  for (const std::string& s : {std::string("cc"), std::string("mp")}) {
    double rho_bias = std::abs(find_cell(res, s, "y_lag1").bias);
    double b2_bias = std::abs(find_cell(res, s, "a0_lag1").bias);
    REQUIRE_OK(std::max(rho_bias, b2_bias) > 0.1,
               s + ": neither y_lag1 (" + num(rho_bias) + ") nor a0_lag1 (" +
                   num(b2_bias) + ") bias exceeds 0.1");
    note("nonstationary " + s + ": y_lag1 bias " + num(rho_bias) + ", a0_lag1 bias " +
         num(b2_bias));
  }
  note("nonstationary mcem-ssm: a0_lag1 bias " + num(own.bias) + ", coverage " +
       num(own.coverage));
  return true;
}

// ---------------------------------------------------------------- criterion 5

bool c5_change_points() {
  int hits = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Rng rng(derive_seed(505, static_cast<std::uint64_t>(rep)));
    DGPConfig dgp;
    dgp.regime = Regime::Nonstationary;
    dgp.T = 1000;
    SimulatedSeries sim = simulate_dgp(dgp, rng);

    MCEMConfig cfg;
    cfg.seed = derive_seed(606, static_cast<std::uint64_t>(rep));
    cfg.ci_chain_draws = 50;
    MCEMResult res = run_mcem(sim.data, benchmark_spec(Regime::Nonstationary), cfg);

    auto it = res.change_points.find(2);  // exposure slope
    if (it == res.change_points.end()) continue;
    const std::vector<int>& cps = it->second;
    if (cps.size() == 2 && std::abs(cps[0] - 400) <= 20 && std::abs(cps[1] - 700) <= 20)
      ++hits;
  }
  REQUIRE_OK(hits >= 90, "change points localized in only " + std::to_string(hits) +
                             "/100 runs");
  note("change points localized within +-20 in " + std::to_string(hits) + "/100 runs");
  return true;
}

// ---------------------------------------------------------------- criterion 6

bool c6_mask_calibration() {
  Rng rng(707);
  DGPConfig dgp;
  dgp.T = 10000;
  SimulatedSeries sim = simulate_dgp(dgp, rng);

  for (Mechanism kind : {Mechanism::MCAR, Mechanism::MAR, Mechanism::MNAR}) {
    for (double target : {0.25, 0.5, 0.75}) {
      MechanismConfig cfg;
      cfg.kind = kind;
      cfg.target_rate = target;
      std::vector<std::uint8_t> observed = generate_mask(sim.data, cfg, rng);
      int m = 0;
      for (std::uint8_t o : observed) m += (o == 0);
      double rate = static_cast<double>(m) / observed.size();
      REQUIRE_OK(std::abs(rate - target) < 0.02,
                 std::string(mechanism_name(kind)) + " rate " + num(rate) + " vs target " +
                     num(target));
    }
  }

  for (double slope : {1.0, -1.0}) {
    MechanismConfig cfg;
    cfg.kind = Mechanism::MNAR;
    cfg.target_rate = 0.5;
    cfg.outcome_slope = slope;
    std::vector<std::uint8_t> observed = generate_mask(sim.data, cfg, rng);
    double mis = 0.0, obs = 0.0;
    int n_mis = 0, n_obs = 0;
    for (int t = 0; t < sim.data.length(); ++t) {
      (observed[t] ? obs : mis) += sim.data.y(t);
      (observed[t] ? n_obs : n_mis) += 1;
    }
    double gap = mis / n_mis - obs / n_obs;
    REQUIRE_OK(gap * slope > 0.0, "selection gap " + num(gap) +
                                      " does not match slope " + num(slope));
  }
  return true;
}

// ---------------------------------------------------------------- criterion 7

bool c7_determinism() {
  ScenarioConfig sc = stationary_benchmark_config();
  sc.mechanism.kind = Mechanism::MAR;
  sc.n_reps = 3;
  sc.root_seed = 909;
  sc.mcem.m_max = 100;
  sc.mcem.ci_chain_draws = 100;
  std::string a = scenario_to_csv(run_scenario(sc));
  std::string b = scenario_to_csv(run_scenario(sc));
  REQUIRE_OK(a == b, "scenario CSV differs between identical runs");
  REQUIRE_OK(!a.empty() && a.find("mcem-ssm") != std::string::npos,
             "scenario CSV incomplete");
  return true;
}

// ---------------------------------------------------------------- criterion 8

bool c8_properties() {
  Rng rng(808);
  DGPConfig dgp;
  dgp.T = 300;
  SimulatedSeries sim = simulate_dgp(dgp, rng);

  // Imputer identity on complete data, observed-entry immutability.
  std::vector<double> y(sim.data.y.data(), sim.data.y.data() + sim.data.length());
  std::vector<std::uint8_t> all_obs(y.size(), 1);
  std::vector<std::uint8_t> holes = all_obs;
  for (std::size_t t = 7; t < y.size(); t += 5) holes[t] = 0;
  for (ImputeStrategy s : {ImputeStrategy::Mean, ImputeStrategy::Locf,
                           ImputeStrategy::Linear, ImputeStrategy::Spline}) {
    REQUIRE_OK(impute_series(s, y, all_obs) == y, "imputer is not the identity");
    std::vector<double> filled = impute_series(s, y, holes);
    for (std::size_t t = 0; t < y.size(); ++t)
      if (holes[t]) REQUIRE_OK(filled[t] == y[t], "imputer modified an observed entry");
  }

  // Rubin pooled mean = mean of the estimates.
  std::vector<FitSummary> fits(3);
  std::normal_distribution<double> N01(0.0, 1.0);
  for (FitSummary& f : fits) {
    f.names = {"a", "b"};
    f.estimates = VectorXd(2);
    f.estimates << N01(rng), N01(rng);
    f.std_errors = VectorXd::Constant(2, 0.3);
    f.ci_lower = f.estimates.array() - 0.6;
    f.ci_upper = f.estimates.array() + 0.6;
    f.n = 50;
  }
  FitSummary pooled = pool_rubin(fits);
  for (int j = 0; j < 2; ++j) {
    double mean = (fits[0].estimates(j) + fits[1].estimates(j) + fits[2].estimates(j)) / 3;
    REQUIRE_OK(std::abs(pooled.estimates(j) - mean) < 1e-12,
               "pooled estimate is not the mean of the estimates");
    REQUIRE_OK(pooled.std_errors(j) >= 0.3, "pooling shrank the within-imputation error");
  }

  // Penalized segmentation monotonicity.
  std::vector<double> series;
  for (int t = 0; t < 400; ++t)
    series.push_back((t < 200 ? 0.0 : 1.5) + 0.3 * N01(rng));
  std::size_t prev = series.size();
  for (double pen : {0.5, 4.0, 32.0, 256.0}) {
    Segmentation seg = detect_changepoints(series, pen, 20);
    REQUIRE_OK(seg.change_points.size() <= prev, "segmentation not monotone in penalty");
    prev = seg.change_points.size();
  }

  // PSD ordering of filter and smoother variances.
  Rng orng(9090);
  for (int rep = 0; rep < 10; ++rep) {
    oracle::Instance in = oracle::make_instance(orng, 0);
    std::map<int, double> fill;
    std::vector<DesignRow> rows = build_design(in.data, in.em, fill);
    VectorXd y_rows(in.n);
    std::vector<std::uint8_t> obs(in.n, 1);
    for (int i = 0; i < in.n; ++i) y_rows(i) = in.data.y(rows[i].t - 1);
    FilterResult fr = kalman_filter(in.theta, rows, y_rows, obs);
    SmootherResult sr = kalman_smoother(in.theta, fr);
    for (int i = 1; i <= in.n; ++i) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> e1(fr.predicted[i].cov - fr.filtered[i].cov);
      REQUIRE_OK(e1.eigenvalues().minCoeff() > -1e-9, "update inflated the variance");
      Eigen::SelfAdjointEigenSolver<MatrixXd> e2(fr.filtered[i].cov - sr.smoothed[i].cov);
      REQUIRE_OK(e2.eigenvalues().minCoeff() > -1e-9, "smoothing inflated the variance");
    }
  }
  return true;
}

struct Criterion {
  const char* name;
  bool (*fn)();
};

}  // namespace

// With no arguments every criterion runs; otherwise only those whose
// leading number is listed (e.g. "./acceptance 1 5").
int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {"1 oracle equivalence", c1_oracle_equivalence},
      {"2 complete-data fixed point", c2_complete_data_fixed_point},
      {"3 stationary recovery", c3_stationary_recovery},
      {"4 nonstationary recovery", c4_nonstationary_recovery},
      {"5 change-point localization", c5_change_points},
      {"6 missingness calibration", c6_mask_calibration},
      {"7 determinism", c7_determinism},
      {"8 invariants and properties", c8_properties},
  };

  std::set<std::string> wanted;
  for (int a = 1; a < argc; ++a) wanted.insert(argv[a]);

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && !wanted.count(std::string(1, c.name[0]))) continue;
    g_notes.clear();
    auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    std::string why;
    try {
      ok = c.fn();
    } catch (const Failure& f) {
      why = f.what;
    } catch (const std::exception& ex) {
      why = std::string("unexpected error: ") + ex.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", c.name, secs,
                why.empty() ? "" : " -- ", why.c_str());
    for (const std::string& n : g_notes) std::printf("       %s\n", n.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
