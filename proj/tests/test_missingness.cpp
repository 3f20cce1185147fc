#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mcemssm/missingness.hpp"
#include "mcemssm/simulator.hpp"

using namespace mcemssm;

namespace {

TimeSeriesDataset big_series(int T, Rng& rng) {
  DGPConfig cfg;
  cfg.T = T;
  return simulate_dgp(cfg, rng).data;
}

double missing_rate(const std::vector<std::uint8_t>& observed) {
  int m = 0;
  for (std::uint8_t o : observed) m += (o == 0);
  return static_cast<double>(m) / observed.size();
}

}  // namespace

TEST_CASE("partition_timepoints classifies rows by the outcome mask") {
  // T = 8, q = 2; times 3..8 are analysis rows.
  std::vector<std::uint8_t> obs = {1, 1, 1, 0, 1, 1, 0, 1};
  MissingPattern p = partition_timepoints(obs, 2);
  CHECK(p.t_obs0 == std::set<int>{3});
  CHECK(p.t_obs1 == std::set<int>{5, 6, 8});
  CHECK(p.t_mis == std::set<int>{4, 7});
  CHECK(p.n_obs() == 4);
}

TEST_CASE("calibrate_intercept hits the target mean probability") {
  Rng rng(1);
  std::normal_distribution<double> N01(0.0, 1.0);
  VectorXd lp(5000);
  for (int i = 0; i < lp.size(); ++i) lp(i) = 2.0 * N01(rng);
  for (double target : {0.25, 0.5, 0.75}) {
    double c = calibrate_intercept(lp, target);
    double mean = 0.0;
    for (int i = 0; i < lp.size(); ++i) mean += 1.0 / (1.0 + std::exp(-(c + lp(i))));
    mean /= static_cast<double>(lp.size());
    CHECK(std::abs(mean - target) <= 2e-4);
  }
}

TEST_CASE("calibrate_intercept rejects degenerate input") {
  CHECK_THROWS_AS(calibrate_intercept(VectorXd(), 0.5), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_intercept(VectorXd::Zero(10), 1.0), std::invalid_argument);
}

TEST_CASE("masks hit the target rate within two points at T = 10000") {
  Rng rng(77);
  TimeSeriesDataset data = big_series(10000, rng);
  for (Mechanism kind : {Mechanism::MCAR, Mechanism::MAR, Mechanism::MNAR}) {
    for (double target : {0.25, 0.5, 0.75}) {
      MechanismConfig cfg;
      cfg.kind = kind;
      cfg.target_rate = target;
      std::vector<std::uint8_t> observed = generate_mask(data, cfg, rng);
      CHECK(std::abs(missing_rate(observed) - target) < 0.02);
    }
  }
}

TEST_CASE("MNAR selection gap carries the sign of the slope") {
  Rng rng(3);
  TimeSeriesDataset data = big_series(10000, rng);
  for (double slope : {1.5, -1.5}) {
    MechanismConfig cfg;
    cfg.kind = Mechanism::MNAR;
    cfg.target_rate = 0.5;
    cfg.outcome_slope = slope;
    std::vector<std::uint8_t> observed = generate_mask(data, cfg, rng);
    double mean_mis = 0.0, mean_obs = 0.0;
    int n_mis = 0, n_obs = 0;
    for (int t = 0; t < data.length(); ++t) {
      if (observed[t]) {
        mean_obs += data.y(t);
        ++n_obs;
      } else {
        mean_mis += data.y(t);
        ++n_mis;
      }
    }
    mean_mis /= n_mis;
    mean_obs /= n_obs;
    // Positive slope: large outcomes are more likely to go missing.
    if (slope > 0.0)
      CHECK(mean_mis > mean_obs);
    else
      CHECK(mean_mis < mean_obs);
  }
}

TEST_CASE("rate zero leaves everything observed") {
  Rng rng(9);
  TimeSeriesDataset data = big_series(500, rng);
  MechanismConfig cfg;
  cfg.target_rate = 0.0;
  std::vector<std::uint8_t> observed = generate_mask(data, cfg, rng);
  CHECK(std::accumulate(observed.begin(), observed.end(), 0) == 500);
}
