#include "mcemssm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "mcemssm/missingness.hpp"
#include "mcemssm/stats.hpp"

namespace mcemssm {

namespace {

std::vector<int> observed_indices(const std::vector<std::uint8_t>& observed) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(observed.size()); ++i)
    if (observed[i]) idx.push_back(i);
  return idx;
}

// Natural cubic spline through (xs, ys); returns second derivatives.
std::vector<double> spline_second_derivatives(const std::vector<int>& xs,
                                              const std::vector<double>& ys) {
  const int n = static_cast<int>(xs.size());
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;
  std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), r(n, 0.0);
  b[0] = b[n - 1] = 1.0;
  for (int i = 1; i + 1 < n; ++i) {
    double h0 = xs[i] - xs[i - 1];
    double h1 = xs[i + 1] - xs[i];
    a[i] = h0 / 6.0;
    b[i] = (h0 + h1) / 3.0;
    c[i] = h1 / 6.0;
    r[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
  }
  // Thomas algorithm
  for (int i = 1; i < n; ++i) {
    double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    r[i] -= w * r[i - 1];
  }
  m[n - 1] = r[n - 1] / b[n - 1];
  for (int i = n - 2; i >= 0; --i) m[i] = (r[i] - c[i] * m[i + 1]) / b[i];
  return m;
}

}  // namespace

std::vector<double> impute_series(ImputeStrategy strategy, const std::vector<double>& y,
                                  const std::vector<std::uint8_t>& observed) {
  const int T = static_cast<int>(y.size());
  if (static_cast<int>(observed.size()) != T)
    throw std::invalid_argument("impute_series: mask length mismatch");
  std::vector<int> idx = observed_indices(observed);
  if (idx.empty()) throw std::invalid_argument("impute_series: all values missing");

  std::vector<double> out = y;
  switch (strategy) {
    case ImputeStrategy::Mean: {
      double m = 0.0;
      for (int i : idx) m += y[i];
      m /= static_cast<double>(idx.size());
      for (int t = 0; t < T; ++t)
        if (!observed[t]) out[t] = m;
      break;
    }
    case ImputeStrategy::Locf: {
      double last = y[idx.front()];  // back-fill leading gap
      for (int t = 0; t < T; ++t) {
        if (observed[t]) last = y[t];
        else out[t] = last;
      }
      break;
    }
    case ImputeStrategy::Linear: {
      int prev = -1;
      for (int t = 0; t < T; ++t) {
        if (!observed[t]) continue;
        if (prev < 0)
          for (int j = 0; j < t; ++j) out[j] = y[t];
        else
          for (int j = prev + 1; j < t; ++j) {
            double w = static_cast<double>(j - prev) / (t - prev);
            out[j] = (1.0 - w) * y[prev] + w * y[t];
          }
        prev = t;
      }
      for (int j = prev + 1; j < T; ++j) out[j] = y[prev];
      break;
    }
    case ImputeStrategy::Spline: {
      std::vector<double> ys;
      for (int i : idx) ys.push_back(y[i]);
      std::vector<double> m2 = spline_second_derivatives(idx, ys);
      int lo = idx.front(), hi = idx.back();
      std::size_t seg = 0;
      for (int t = 0; t < T; ++t) {
        if (observed[t]) continue;
        if (t < lo) { out[t] = y[lo]; continue; }
        if (t > hi) { out[t] = y[hi]; continue; }
        while (idx[seg + 1] < t) ++seg;
        double h = idx[seg + 1] - idx[seg];
        double A = (idx[seg + 1] - t) / h;
        double B = (t - idx[seg]) / h;
        out[t] = A * ys[seg] + B * ys[seg + 1] +
                 ((A * A * A - A) * m2[seg] + (B * B * B - B) * m2[seg + 1]) * h * h / 6.0;
      }
      break;
    }
  }
  return out;
}

namespace {

const char* strategy_name(ImputeStrategy s) {
  switch (s) {
    case ImputeStrategy::Mean: return "mean";
    case ImputeStrategy::Locf: return "locf";
    case ImputeStrategy::Linear: return "linear";
    case ImputeStrategy::Spline: return "spline";
  }
  return "?";
}

ImputedDataset wrap_filled(const TimeSeriesDataset& data, const std::vector<double>& filled,
                           const std::string& name) {
  ImputedDataset out;
  out.data = data;
  out.originally_observed = data.y_observed;
  out.strategy = name;
  for (int t = 0; t < data.length(); ++t) {
    out.data.y(t) = filled[t];
    out.data.y_observed[t] = 1;
  }
  return out;
}

}  // namespace

ImputedDataset impute(ImputeStrategy strategy, const TimeSeriesDataset& data) {
  std::vector<double> y(data.y.data(), data.y.data() + data.length());
  return wrap_filled(data, impute_series(strategy, y, data.y_observed),
                     strategy_name(strategy));
}

ImputedDataset impute_with_arima(const TimeSeriesDataset& data, int max_p, int max_d,
                                 int max_q) {
  std::vector<double> y(data.y.data(), data.y.data() + data.length());
  ArimaImputation ai = impute_arima(y, data.y_observed, max_p, max_d, max_q);
  return wrap_filled(data, ai.imputed, "arima");
}

RegressionData make_regression(const TimeSeriesDataset& complete, const ModelSpec& spec) {
  ModelSpec flat = spec;
  for (auto& r : flat.roles) r = CoefficientRole::Static;
  flat.segments.clear();
  ExpandedModel em = ExpandedModel::build(flat, complete.length());
  std::map<int, double> no_fill;
  for (int t = 1; t <= complete.length(); ++t)
    if (!complete.y_observed[t - 1]) no_fill[t] = std::numeric_limits<double>::quiet_NaN();
  std::vector<DesignRow> rows = build_design(complete, em, no_fill);

  RegressionData reg;
  reg.X = MatrixXd(rows.size(), em.d);
  reg.y = VectorXd(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    reg.X.row(i) = rows[i].values.transpose();
    reg.y(i) = complete.y(rows[i].t - 1);
    reg.times.push_back(rows[i].t);
  }
  for (int b = 0; b < flat.base_dim(); ++b) reg.names.push_back(flat.coefficient_name(b));
  return reg;
}

RegressionData complete_case_filter(const TimeSeriesDataset& data, const ModelSpec& spec) {
  MissingPattern pattern = partition_timepoints(data.y_observed, spec.q);
  RegressionData full = make_regression(data, spec);
  RegressionData reg;
  reg.names = full.names;
  std::vector<int> keep;
  for (std::size_t i = 0; i < full.times.size(); ++i)
    if (pattern.t_obs0.count(full.times[i])) keep.push_back(static_cast<int>(i));
  if (keep.empty()) throw std::runtime_error("complete_case_filter: no fully observed rows");
  reg.X = MatrixXd(keep.size(), full.X.cols());
  reg.y = VectorXd(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    reg.X.row(k) = full.X.row(keep[k]);
    reg.y(k) = full.y(keep[k]);
    reg.times.push_back(full.times[keep[k]]);
  }
  return reg;
}

MiceResult impute_mice(const TimeSeriesDataset& data, const ModelSpec& spec, int m,
                       int cycles, Rng& rng) {
  if (m < 2) throw std::invalid_argument("impute_mice: m must be >= 2");
  const int T = data.length();
  const int q = spec.q;

  // Analysis matrix: [y, regressors]; column 0 is the outcome, columns
  // 1..q the outcome lags, then exposure and covariate lags (complete).
  std::vector<double> y_mean_filled(data.y.data(), data.y.data() + T);
  {
    // temporary mean start for building the frame; cells re-drawn below
    std::vector<double> filled = impute_series(ImputeStrategy::Mean, y_mean_filled,
                                               data.y_observed);
    y_mean_filled = filled;
  }

  const int n = T - q;
  const int d = spec.base_dim();  // includes intercept at column 0
  auto cell_missing = [&](int row, int col) {
    // row r corresponds to time t = q+1+r; col 0 = outcome, col j in
    // 1..q = lag j (design columns shifted by the intercept).
    int t = q + 1 + row;
    if (col == 0) return !data.y_observed[t - 1];
    if (col <= q) return !data.y_observed[t - col - 1];
    return false;
  };

  // Frame columns: 0 = y, 1..q = y lags, then exogenous regressors.
  const int n_cols = d;  // intercept slot replaced by the outcome column
  MatrixXd frame(n, n_cols);

  TimeSeriesDataset filled = data;
  for (int t = 0; t < T; ++t) {
    filled.y(t) = y_mean_filled[t];
    filled.y_observed[t] = 1;
  }
  RegressionData base = make_regression(filled, spec);
  frame.col(0) = base.y;
  for (int j = 1; j < d; ++j) frame.col(j) = base.X.col(j);

  std::vector<int> target_cols;
  for (int j = 0; j <= q; ++j) {
    bool any = false;
    for (int r = 0; r < n && !any; ++r) any = cell_missing(r, j);
    if (any) target_cols.push_back(j);
  }

  std::normal_distribution<double> N01(0.0, 1.0);
  MiceResult out;
  for (int draw = 0; draw < m; ++draw) {
    MatrixXd fr = frame;
    // Initialize missing cells by random draws from the observed part.
    for (int j : target_cols) {
      std::vector<double> obs_vals;
      for (int r = 0; r < n; ++r)
        if (!cell_missing(r, j)) obs_vals.push_back(fr(r, j));
      std::uniform_int_distribution<std::size_t> pick(0, obs_vals.size() - 1);
      for (int r = 0; r < n; ++r)
        if (cell_missing(r, j)) fr(r, j) = obs_vals[pick(rng)];
    }

    for (int cycle = 0; cycle < std::max(1, cycles); ++cycle) {
      for (int j : target_cols) {
        // Predictors: intercept + every other frame column.
        MatrixXd X(n, n_cols);
        X.col(0).setOnes();
        int c = 1;
        for (int k = 0; k < n_cols; ++k)
          if (k != j) X.col(c++) = fr.col(k);

        std::vector<int> obs_rows, mis_rows;
        for (int r = 0; r < n; ++r)
          (cell_missing(r, j) ? mis_rows : obs_rows).push_back(r);

        MatrixXd Xo(obs_rows.size(), n_cols);
        VectorXd yo(obs_rows.size());
        for (std::size_t r = 0; r < obs_rows.size(); ++r) {
          Xo.row(r) = X.row(obs_rows[r]);
          yo(r) = fr(obs_rows[r], j);
        }
        MatrixXd xtx = Xo.transpose() * Xo;
        Eigen::LDLT<MatrixXd> solver(xtx);
        VectorXd beta_hat;
        MatrixXd xtx_inv;
        if (solver.info() == Eigen::Success && solver.isPositive() &&
            xtx.fullPivLu().rank() == n_cols) {
          xtx_inv = xtx.inverse();
        } else {
          // ridge fallback for singular designs
          xtx_inv = (xtx + 1e-6 * MatrixXd::Identity(n_cols, n_cols)).inverse();
        }
        beta_hat = xtx_inv * (Xo.transpose() * yo);
        VectorXd resid = yo - Xo * beta_hat;
        int dof = std::max(1, static_cast<int>(obs_rows.size()) - n_cols);
        std::chi_squared_distribution<double> chi2(dof);
        double sigma2 = resid.squaredNorm() / chi2(rng);

        // beta draw from N(beta_hat, sigma2 (X'X)^-1)
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(xtx_inv);
        MatrixXd half = es.eigenvectors() *
                        es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        VectorXd z(n_cols);
        for (int k = 0; k < n_cols; ++k) z(k) = N01(rng);
        VectorXd beta = beta_hat + std::sqrt(sigma2) * (half * z);

        double sd = std::sqrt(sigma2);
        for (int r : mis_rows) fr(r, j) = X.row(r).dot(beta) + sd * N01(rng);
      }
    }

    RegressionData reg;
    reg.names = base.names;
    reg.times = base.times;
    reg.y = fr.col(0);
    reg.X = base.X;
    for (int j = 1; j < d; ++j) reg.X.col(j) = fr.col(j);
    out.draws.push_back(reg);

    // Series-level fill from the outcome column (burn-in region by
    // linear interpolation).
    TimeSeriesDataset ds = data;
    std::vector<double> yv(data.y.data(), data.y.data() + T);
    std::vector<double> lin = impute_series(ImputeStrategy::Linear, yv, data.y_observed);
    for (int t = 0; t < T; ++t)
      if (!data.y_observed[t]) ds.y(t) = lin[t];
    for (int r = 0; r < n; ++r)
      if (cell_missing(r, 0)) ds.y(q + r) = fr(r, 0);
    ImputedDataset imp;
    imp.originally_observed = data.y_observed;
    imp.strategy = "mp";
    imp.draw_index = draw;
    for (int t = 0; t < T; ++t) ds.y_observed[t] = 1;
    imp.data = ds;
    out.datasets.push_back(imp);
  }
  return out;
}

FitSummary analyze_ols(const RegressionData& reg) {
  OlsFit fit = ols_fit(reg.X, reg.y);
  FitSummary out;
  out.names = reg.names;
  out.estimates = fit.coefficients;
  out.std_errors = fit.standard_errors;
  out.ci_lower = fit.coefficients - 1.96 * fit.standard_errors;
  out.ci_upper = fit.coefficients + 1.96 * fit.standard_errors;
  out.n = fit.n;
  return out;
}

FitSummary pool_rubin(const std::vector<FitSummary>& fits) {
  if (fits.empty()) throw std::invalid_argument("pool_rubin: no fits");
  const int m = static_cast<int>(fits.size());
  const int p = static_cast<int>(fits[0].estimates.size());
  FitSummary out;
  out.names = fits[0].names;
  out.estimates = VectorXd::Zero(p);
  out.std_errors = VectorXd::Zero(p);
  out.n = fits[0].n;
  for (const auto& f : fits) out.estimates += f.estimates / m;
  VectorXd within = VectorXd::Zero(p), between = VectorXd::Zero(p);
  for (const auto& f : fits) {
    within += f.std_errors.cwiseProduct(f.std_errors) / m;
    VectorXd dev = f.estimates - out.estimates;
    between += dev.cwiseProduct(dev);
  }
  if (m > 1) between /= static_cast<double>(m - 1);
  VectorXd total = within + (1.0 + 1.0 / m) * between;
  out.std_errors = total.cwiseSqrt();
  out.ci_lower = out.estimates - 1.96 * out.std_errors;
  out.ci_upper = out.estimates + 1.96 * out.std_errors;
  return out;
}

}  // namespace mcemssm
