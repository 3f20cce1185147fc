#include "mcemssm/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mcemssm/stats.hpp"

namespace mcemssm {

void DGPConfig::validate() const {
  if (T < 3) throw std::invalid_argument("dgp: T must be >= 3");
  if (R < 0.0) throw std::invalid_argument("dgp: R must be >= 0");
  if (std::abs(rho) >= 1.0) throw std::invalid_argument("dgp: |rho| must be < 1");
  if (regime == Regime::Nonstationary) {
    if (beta1_segment_values.size() != beta1_change_points.size() + 1)
      throw std::invalid_argument("dgp: need one beta1 value per segment");
    int prev = 0;
    for (int cp : beta1_change_points) {
      if (cp <= prev || cp >= T)
        throw std::invalid_argument(
            "dgp: beta1 change points must be increasing and interior");
      prev = cp;
    }
  }
  // The exogenous VAR must be stable on its own (eigenvalues of
  // [[ar, cross], [cross, ar]] are ar +- cross).
  if (std::abs(exo_ar) + std::abs(exo_cross) >= 1.0)
    throw std::invalid_argument("dgp: exogenous process unstable (|exo_ar| + |exo_cross| >= 1)");
}

namespace {

struct Innovations {
  std::vector<double> eps_a, eps_c, v, w;
};

struct Pass {
  VectorXd y, a, c;
};

Pass generate_pass(const DGPConfig& cfg, const TruthPaths& truth, const Innovations& in,
                   bool use_z, double center, double scale) {
  const int T = cfg.T;
  Pass out{VectorXd(T), VectorXd(T), VectorXd(T)};
  double y_prev = truth.beta0(0) / (1.0 - cfg.rho);
  double a_prev = 0.0, c_prev = 0.0;
  double r_sd = std::sqrt(cfg.R);
  for (int i = 0; i < T; ++i) {
    double z = use_z ? (y_prev - center) / scale : 0.0;
    double a = cfg.exo_ar * a_prev + cfg.exo_outcome * z + cfg.exo_cross * c_prev +
               cfg.exo_sd * in.eps_a[i];
    double c = cfg.exo_ar * c_prev + cfg.exo_outcome * z + cfg.exo_cross * a_prev +
               cfg.exo_sd * in.eps_c[i];
    double y = truth.beta0(i) + truth.rho(i) * y_prev + truth.beta1(i) * a +
               truth.beta2(i) * a_prev + truth.betac(i) * c + r_sd * in.v[i];
    out.a(i) = a;
    out.c(i) = c;
    out.y(i) = y;
    a_prev = a;
    c_prev = c;
    y_prev = y;
  }
  return out;
}

}  // namespace

SimulatedSeries simulate_dgp(const DGPConfig& cfg, Rng& rng) {
  cfg.validate();
  const int T = cfg.T;

  std::normal_distribution<double> N01(0.0, 1.0);
  Innovations in;
  in.eps_a.resize(T);
  in.eps_c.resize(T);
  in.v.resize(T);
  in.w.resize(T);
  for (int i = 0; i < T; ++i) in.eps_a[i] = N01(rng);
  for (int i = 0; i < T; ++i) in.eps_c[i] = N01(rng);
  for (int i = 0; i < T; ++i) in.v[i] = N01(rng);
  for (int i = 0; i < T; ++i) in.w[i] = N01(rng);

  TruthPaths truth;
  truth.R = cfg.R;
  truth.rho = VectorXd::Constant(T, cfg.rho);
  truth.beta2 = VectorXd::Constant(T, cfg.beta2);
  truth.betac = VectorXd::Constant(T, cfg.betac);
  if (cfg.regime == Regime::Stationary) {
    truth.beta0 = VectorXd::Constant(T, cfg.beta0);
    truth.beta1 = VectorXd::Constant(T, cfg.beta1);
  } else {
    truth.beta0 = VectorXd(T);
    double b = cfg.beta0;
    for (int i = 0; i < T; ++i) {
      b = cfg.anchored_intercept ? b + cfg.intercept_rw_sd * in.w[i]
                                 : cfg.beta0 + b + cfg.intercept_rw_sd * in.w[i];
      truth.beta0(i) = b;
    }
    truth.beta1 = VectorXd(T);
    truth.beta1_change_points = cfg.beta1_change_points;
    std::size_t seg = 0;
    for (int t = 1; t <= T; ++t) {
      while (seg < cfg.beta1_change_points.size() && t > cfg.beta1_change_points[seg]) ++seg;
      truth.beta1(t - 1) = cfg.beta1_segment_values[seg];
    }
  }

  // Pilot pass fixes the standardization constants; the final pass
  // reuses the same innovations.
  Pass pilot = generate_pass(cfg, truth, in, false, 0.0, 1.0);
  double center = pilot.y.mean();
  double scale =
      std::sqrt((pilot.y.array() - center).square().sum() / std::max(1, T - 1));
  if (!(scale > 0.0)) scale = 1.0;
  Pass final = generate_pass(cfg, truth, in, true, center, scale);
  // Outcome feedback can destabilize an otherwise stable exogenous
  // system; fail loudly instead of emitting a divergent series.
  if (!final.y.allFinite() || final.y.cwiseAbs().maxCoeff() > 1e9)
    throw std::runtime_error("dgp: generated series diverged; weaken the feedback constants");

  SimulatedSeries out;
  out.truth = std::move(truth);
  out.y_center = center;
  out.y_scale = scale;
  out.data.y = final.y;
  out.data.y_observed.assign(T, 1);
  out.data.exposures = final.a;
  out.data.covariates = final.c;
  out.data.validate();
  return out;
}

ModelSpec benchmark_spec(Regime regime) {
  ModelSpec spec;
  spec.q = 1;
  spec.p = 1;
  spec.o = 0;
  spec.n_exposures = 1;
  spec.n_covariates = 1;
  spec.roles.assign(spec.base_dim(), CoefficientRole::Static);
  if (regime == Regime::Nonstationary) {
    spec.roles[0] = CoefficientRole::RandomWalk;      // intercept
    spec.roles[2] = CoefficientRole::PeriodicStable;  // a0_lag0
  }
  return spec;
}

void ScenarioConfig::validate() const {
  dgp.validate();
  mcem.validate();
  if (strategies.empty()) throw std::invalid_argument("scenario: empty strategy list");
  if (n_reps < 2) throw std::invalid_argument("scenario: n_reps must be >= 2");
  if (workers < 1) throw std::invalid_argument("scenario: workers must be >= 1");
  if (mice_m < 2) throw std::invalid_argument("scenario: mice_m must be >= 2");
  static const std::vector<std::string> known = {"cc",     "mean",  "locf", "linear",
                                                 "spline", "arima", "mp",   "mcem-ssm"};
  for (const auto& s : strategies)
    if (std::find(known.begin(), known.end(), s) == known.end())
      throw std::invalid_argument("scenario: unknown strategy id '" + s + "'");
}

namespace {

const VectorXd& truth_path(const TruthPaths& truth, const std::string& base_name) {
  if (base_name == "intercept") return truth.beta0;
  if (base_name == "y_lag1") return truth.rho;
  if (base_name == "a0_lag0") return truth.beta1;
  if (base_name == "a0_lag1") return truth.beta2;
  if (base_name == "c0_lag0") return truth.betac;
  throw std::logic_error("no truth path for coefficient " + base_name);
}

std::vector<std::pair<int, int>> true_segments(const TruthPaths& truth, int T) {
  Segmentation seg;
  seg.change_points = truth.beta1_change_points;
  seg.length = T;
  return seg.segments();
}

EstimateMap from_fit(const FitSummary& fit) {
  EstimateMap out;
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    Estimate e;
    e.value = fit.estimates(static_cast<int>(i));
    e.lo = fit.ci_lower(static_cast<int>(i));
    e.hi = fit.ci_upper(static_cast<int>(i));
    e.model_se = fit.std_errors(static_cast<int>(i));
    e.has_ci = true;
    out[fit.names[i]] = e;
  }
  return out;
}

// orig_times maps a reduced time index (1-based) back to original
// time; empty when the fitted series is the original one.
EstimateMap from_mcem(const MCEMResult& res, const ModelSpec& spec,
                      const TruthPaths& truth, int T_orig,
                      const std::vector<int>& orig_times) {
  EstimateMap out;
  auto to_reduced = [&](int t_orig) {
    if (orig_times.empty()) return t_orig;
    auto it = std::lower_bound(orig_times.begin(), orig_times.end(), t_orig);
    if (it == orig_times.end()) --it;
    return static_cast<int>(it - orig_times.begin()) + 1;
  };

  for (int b = 0; b < spec.base_dim(); ++b) {
    std::string name = spec.coefficient_name(b);
    switch (spec.roles[b]) {
      case CoefficientRole::Static: {
        int col = res.model.base_to_columns[b].front();
        Estimate e;
        e.value = res.estimates(col);
        e.lo = res.intervals[col].lower;
        e.hi = res.intervals[col].upper;
        e.model_se = (e.hi - e.lo) / (2.0 * 1.959964);
        e.has_ci = true;
        out[name] = e;
        break;
      }
      case CoefficientRole::PeriodicStable: {
        auto segs = true_segments(truth, T_orig);
        for (std::size_t k = 0; k < segs.size(); ++k) {
          int mid = (segs[k].first + segs[k].second) / 2;
          int col = res.model.column_at(b, to_reduced(mid));
          if (col < 0) continue;
          Estimate e;
          e.value = res.estimates(col);
          e.lo = res.intervals[col].lower;
          e.hi = res.intervals[col].upper;
          e.model_se = (e.hi - e.lo) / (2.0 * 1.959964);
          e.has_ci = true;
          out[name + "@seg" + std::to_string(k + 1)] = e;
        }
        break;
      }
      case CoefficientRole::RandomWalk: {
        const VectorXd& path = truth_path(truth, name);
        double sse = 0.0;
        int n = 0;
        for (std::size_t r = 0; r < res.row_times.size(); ++r) {
          int t = res.row_times[r];
          int t_orig = orig_times.empty() ? t : orig_times[t - 1];
          double dev = res.trajectories(static_cast<int>(r), b) - path(t_orig - 1);
          sse += dev * dev;
          ++n;
        }
        Estimate e;
        e.value = n > 0 ? std::sqrt(sse / n) : 0.0;
        e.has_ci = false;
        out[name + ":rmse"] = e;
        break;
      }
    }
  }
  return out;
}

TimeSeriesDataset reduce_to_observed(const TimeSeriesDataset& data,
                                     std::vector<int>& orig_times) {
  orig_times.clear();
  for (int t = 1; t <= data.length(); ++t)
    if (data.y_observed[t - 1]) orig_times.push_back(t);
  const int n = static_cast<int>(orig_times.size());
  if (n < 10) throw std::runtime_error("cc: too few observed time points");
  TimeSeriesDataset out;
  out.y = VectorXd(n);
  out.y_observed.assign(n, 1);
  out.exposures = MatrixXd(n, data.n_exposures());
  out.covariates = MatrixXd(n, data.n_covariates());
  for (int i = 0; i < n; ++i) {
    int t = orig_times[i];
    out.y(i) = data.y(t - 1);
    if (data.n_exposures() > 0) out.exposures.row(i) = data.exposures.row(t - 1);
    if (data.n_covariates() > 0) out.covariates.row(i) = data.covariates.row(t - 1);
  }
  return out;
}

// Rubin-style pooling over per-imputation estimate maps. RMSE entries
// (no interval) are averaged.
EstimateMap pool_maps(const std::vector<EstimateMap>& maps) {
  if (maps.empty()) throw std::runtime_error("mp: no imputation fits to pool");
  const int m = static_cast<int>(maps.size());
  EstimateMap out;
  for (const auto& [name, first] : maps.front()) {
    std::vector<double> values, ses;
    for (const auto& mp : maps) {
      auto it = mp.find(name);
      if (it == mp.end()) continue;
      values.push_back(it->second.value);
      if (it->second.has_ci) ses.push_back(it->second.model_se);
    }
    Estimate e;
    e.value = sample_mean(values);
    if (first.has_ci && static_cast<int>(ses.size()) == static_cast<int>(values.size())) {
      double within = 0.0;
      for (double s : ses) within += s * s;
      within /= ses.size();
      double between = 0.0;
      for (double v : values) between += (v - e.value) * (v - e.value);
      between /= std::max<std::size_t>(1, values.size() - 1);
      double total = within + (1.0 + 1.0 / m) * between;
      e.model_se = std::sqrt(total);
      e.lo = e.value - 1.959964 * e.model_se;
      e.hi = e.value + 1.959964 * e.model_se;
      e.has_ci = true;
    }
    out[name] = e;
  }
  return out;
}

}  // namespace

EstimateMap run_strategy(const std::string& id, const TimeSeriesDataset& masked,
                         const TruthPaths& truth, const ScenarioConfig& cfg, Rng& rng) {
  ModelSpec spec = benchmark_spec(cfg.dgp.regime);
  const bool ssm_mode =
      std::any_of(spec.roles.begin(), spec.roles.end(),
                  [](CoefficientRole r) { return r != CoefficientRole::Static; });
  const int T = masked.length();

  MCEMConfig mc = cfg.mcem;
  mc.seed = rng();

  auto fit_ssm = [&](const TimeSeriesDataset& ds,
                     const std::vector<int>& orig_times) -> EstimateMap {
    MCEMResult res = run_mcem(ds, spec, mc);
    return from_mcem(res, spec, truth, T, orig_times);
  };
  auto fit_ols = [&](const RegressionData& reg) { return from_fit(analyze_ols(reg)); };

  if (id == "mcem-ssm") return fit_ssm(masked, {});

  if (id == "cc") {
    if (!ssm_mode) return fit_ols(complete_case_filter(masked, spec));
    std::vector<int> orig_times;
    TimeSeriesDataset reduced = reduce_to_observed(masked, orig_times);
    return fit_ssm(reduced, orig_times);
  }

  if (id == "mp") {
    MiceResult mice = impute_mice(masked, spec, cfg.mice_m, cfg.mice_cycles, rng);
    if (!ssm_mode) {
      std::vector<FitSummary> fits;
      for (const auto& draw : mice.draws) fits.push_back(analyze_ols(draw));
      return from_fit(pool_rubin(fits));
    }
    std::vector<EstimateMap> maps;
    for (const auto& ds : mice.datasets) {
      mc.seed = rng();
      maps.push_back(fit_ssm(ds.data, {}));
    }
    return pool_maps(maps);
  }

  // Single imputation strategies.
  ImputedDataset imp = [&] {
    if (id == "mean") return impute(ImputeStrategy::Mean, masked);
    if (id == "locf") return impute(ImputeStrategy::Locf, masked);
    if (id == "linear") return impute(ImputeStrategy::Linear, masked);
    if (id == "spline") return impute(ImputeStrategy::Spline, masked);
    if (id == "arima") return impute_with_arima(masked);
    throw std::invalid_argument("unknown strategy id '" + id + "'");
  }();
  if (!ssm_mode) return fit_ols(make_regression(imp.data, spec));
  return fit_ssm(imp.data, {});
}

Metrics compute_metrics(const std::vector<double>& estimates,
                        const std::vector<double>& truths,
                        const std::vector<std::pair<double, double>>& cis) {
  if (estimates.size() != truths.size() || estimates.size() != cis.size())
    throw std::invalid_argument("compute_metrics: length mismatch");
  if (estimates.empty()) throw std::invalid_argument("compute_metrics: empty input");
  Metrics m;
  double covered = 0.0;
  std::vector<double> errors(estimates.size());
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    errors[i] = estimates[i] - truths[i];
    if (cis[i].first <= truths[i] && truths[i] <= cis[i].second) covered += 1.0;
  }
  m.bias = sample_mean(errors);
  m.empirical_se = estimates.size() > 1 ? sample_sd(estimates) : 0.0;
  m.coverage = covered / static_cast<double>(estimates.size());
  return m;
}

namespace {

struct RepOutcome {
  std::map<std::string, EstimateMap> per_strategy;
  std::map<std::string, std::string> errors;
};

std::map<std::string, double> truth_values(const ScenarioConfig& cfg) {
  std::map<std::string, double> tv;
  tv["y_lag1"] = cfg.dgp.rho;
  tv["a0_lag1"] = cfg.dgp.beta2;
  tv["c0_lag0"] = cfg.dgp.betac;
  if (cfg.dgp.regime == Regime::Stationary) {
    tv["intercept"] = cfg.dgp.beta0;
    tv["a0_lag0"] = cfg.dgp.beta1;
  } else {
    tv["intercept:rmse"] = 0.0;
    for (std::size_t k = 0; k < cfg.dgp.beta1_segment_values.size(); ++k)
      tv["a0_lag0@seg" + std::to_string(k + 1)] = cfg.dgp.beta1_segment_values[k];
  }
  return tv;
}

}  // namespace

const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::MCAR: return "MCAR";
    case Mechanism::MAR: return "MAR";
    case Mechanism::MNAR: return "MNAR";
  }
  return "?";
}

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  std::vector<RepOutcome> reps(cfg.n_reps);

  auto run_rep = [&](int rep) {
    Rng rep_rng(derive_seed(cfg.root_seed, static_cast<std::uint64_t>(rep)));
    SimulatedSeries sim = simulate_dgp(cfg.dgp, rep_rng);
    TimeSeriesDataset masked = sim.data;
    masked.y_observed = generate_mask(sim.data, cfg.mechanism, rep_rng);

    for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
      const std::string& id = cfg.strategies[s];
      Rng strat_rng(derive_seed(derive_seed(cfg.root_seed, static_cast<std::uint64_t>(rep)),
                                1000 + static_cast<std::uint64_t>(s)));
      try {
        reps[rep].per_strategy[id] = run_strategy(id, masked, sim.truth, cfg, strat_rng);
      } catch (const std::exception& ex) {
        reps[rep].errors[id] = ex.what();
      }
    }
  };

  if (cfg.workers <= 1) {
    for (int rep = 0; rep < cfg.n_reps; ++rep) run_rep(rep);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int rep = next.fetch_add(1); rep < cfg.n_reps; rep = next.fetch_add(1))
        run_rep(rep);
    };
    std::vector<std::thread> pool;
    int n_workers = std::min(cfg.workers, cfg.n_reps);
    pool.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::map<std::string, double> tv = truth_values(cfg);
  ScenarioResult out;
  out.n_reps = cfg.n_reps;
  for (const auto& id : cfg.strategies) {
    int failures = 0;
    std::vector<const EstimateMap*> ok;
    for (const auto& rep : reps) {
      auto it = rep.per_strategy.find(id);
      if (it != rep.per_strategy.end()) ok.push_back(&it->second);
      else ++failures;
    }
    out.failures[id] = failures;
    if (ok.empty()) continue;

    for (const auto& [name, first] : *ok.front()) {
      auto tv_it = tv.find(name);
      if (tv_it == tv.end()) continue;
      std::vector<double> estimates, truths;
      std::vector<std::pair<double, double>> cis;
      std::vector<double> ses;
      bool has_ci = first.has_ci;
      for (const EstimateMap* mp : ok) {
        auto it = mp->find(name);
        if (it == mp->end()) continue;
        estimates.push_back(it->second.value);
        truths.push_back(tv_it->second);
        cis.emplace_back(it->second.lo, it->second.hi);
        ses.push_back(it->second.model_se);
      }
      if (estimates.empty()) continue;
      Metrics m = compute_metrics(estimates, truths, cis);
      ScenarioCell cell;
      cell.mechanism = mechanism_name(cfg.mechanism.kind);
      cell.rate = cfg.mechanism.target_rate;
      cell.strategy = id;
      cell.coefficient = name;
      cell.n_reps = static_cast<int>(estimates.size());
      cell.n_failures = failures;
      cell.truth = tv_it->second;
      cell.mean_estimate = sample_mean(estimates);
      cell.bias = m.bias;
      cell.empirical_se = m.empirical_se;
      cell.mean_model_se = has_ci ? sample_mean(ses)
                                  : std::numeric_limits<double>::quiet_NaN();
      cell.coverage = has_ci ? m.coverage : std::numeric_limits<double>::quiet_NaN();
      out.cells.push_back(cell);
    }
  }
  return out;
}

std::string scenario_to_csv(const ScenarioResult& result) {
  std::ostringstream os;
  os << "mechanism,rate,strategy,coefficient,n_reps,n_failures,metric,value\n";
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  for (const auto& c : result.cells) {
    auto row = [&](const char* metric, double value) {
      os << c.mechanism << ',' << num(c.rate) << ',' << c.strategy << ',' << c.coefficient
         << ',' << c.n_reps << ',' << c.n_failures << ',' << metric << ',' << num(value)
         << '\n';
    };
    row("truth", c.truth);
    row("mean_estimate", c.mean_estimate);
    row("bias", c.bias);
    row("empirical_se", c.empirical_se);
    row("mean_model_se", c.mean_model_se);
    row("coverage", c.coverage);
  }
  return os.str();
}

}  // namespace mcemssm
