#include "mcemssm/arima.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace mcemssm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kConditionOn = 8;  // leading likelihood terms dropped (diffuse start)

// Monahan transform: unconstrained -> partial autocorrelations ->
// stationary AR (or invertible MA) coefficients.
std::vector<double> pacf_to_coeffs(const std::vector<double>& u) {
  const int k = static_cast<int>(u.size());
  std::vector<double> phi(k, 0.0), work(k, 0.0);
  for (int j = 0; j < k; ++j) {
    double r = std::tanh(u[j]);
    phi[j] = r;
    for (int i = 0; i < j; ++i) work[i] = phi[i] - r * phi[j - 1 - i];
    for (int i = 0; i < j; ++i) phi[i] = work[i];
  }
  return phi;
}

// phi(B)(1-B)^d expanded; returns the full (possibly nonstationary)
// AR polynomial coefficients.
std::vector<double> expand_with_differencing(const std::vector<double>& ar, int d) {
  std::vector<double> poly{1.0};  // coefficients of phi*(B) with sign +: 1 - a1 B - ...
  // represent as polynomial in B with poly[0] = 1, poly[k] = -a_k
  for (double a : ar) poly.push_back(0.0);
  for (std::size_t i = 0; i < ar.size(); ++i) poly[i + 1] = -ar[i];
  for (int j = 0; j < d; ++j) {
    std::vector<double> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += poly[i];
      next[i + 1] -= poly[i];
    }
    poly = next;
  }
  std::vector<double> a(poly.size() - 1);
  for (std::size_t i = 1; i < poly.size(); ++i) a[i - 1] = -poly[i];
  return a;
}

// Concentrated conditional log-likelihood of the ARIMA state-space
// form (Harvey): alpha_{t+1} = T alpha_t + R eta_t, y_t = alpha_t(0).
// Returns -inf on numerical failure; sigma2_out receives the profiled
// innovation variance.
double arima_loglik(const std::vector<double>& y, const std::vector<std::uint8_t>& obs,
                    const std::vector<double>& ar_full, const std::vector<double>& ma,
                    double* sigma2_out) {
  const int N = static_cast<int>(y.size());
  const int r = std::max(static_cast<int>(ar_full.size()),
                         static_cast<int>(ma.size()) + 1);

  MatrixXd Tm = MatrixXd::Zero(r, r);
  for (int i = 0; i < r; ++i) {
    if (i < static_cast<int>(ar_full.size())) Tm(i, 0) = ar_full[i];
    if (i + 1 < r) Tm(i, i + 1) = 1.0;
  }
  VectorXd rvec = VectorXd::Zero(r);
  rvec(0) = 1.0;
  for (std::size_t i = 0; i < ma.size(); ++i) rvec(i + 1) = ma[i];
  MatrixXd RR = rvec * rvec.transpose();

  VectorXd a = VectorXd::Zero(r);
  MatrixXd P = 1e6 * MatrixXd::Identity(r, r);

  double sum_logS = 0.0, sum_e2 = 0.0;
  int used = 0, seen = 0;
  for (int t = 0; t < N; ++t) {
    if (obs[t]) {
      double S = P(0, 0);
      if (!(S > 1e-300)) return -kInf;
      double e = y[t] - a(0);
      ++seen;
      if (seen > kConditionOn) {
        sum_logS += std::log(S);
        sum_e2 += e * e / S;
        ++used;
      }
      VectorXd K = P.col(0) / S;
      a += K * e;
      P -= K * P.row(0);
    }
    a = (Tm * a).eval();
    P = (Tm * P * Tm.transpose() + RR).eval();
    symmetrize(P);
  }
  if (used < 5) return -kInf;
  double sigma2 = std::max(sum_e2 / used, 1e-12);
  if (sigma2_out) *sigma2_out = sigma2;
  double ll = -0.5 * (used * std::log(2.0 * M_PI * sigma2) + sum_logS + used);
  return std::isfinite(ll) ? ll : -kInf;
}

// Nelder-Mead on an unconstrained parameter vector.
std::vector<double> nelder_mead(std::function<double(const std::vector<double>&)> f,
                                std::vector<double> x0, int max_iter) {
  const int n = static_cast<int>(x0.size());
  if (n == 0) return x0;
  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 0; i < n; ++i) simplex[i + 1][i] += 0.5;
  for (int i = 0; i <= n; ++i) fv[i] = f(simplex[i]);

  for (int it = 0; it < max_iter; ++it) {
    int lo = 0, hi = 0, hi2 = 0;
    for (int i = 1; i <= n; ++i) {
      if (fv[i] < fv[lo]) lo = i;
      if (fv[i] > fv[hi]) hi = i;
    }
    for (int i = 0; i <= n; ++i)
      if (i != hi && fv[i] > fv[hi2]) hi2 = i;
    if (std::abs(fv[hi] - fv[lo]) < 1e-9 * (std::abs(fv[lo]) + 1e-9)) break;

    std::vector<double> centroid(n, 0.0);
    for (int i = 0; i <= n; ++i)
      if (i != hi)
        for (int j = 0; j < n; ++j) centroid[j] += simplex[i][j] / n;

    auto blend = [&](double w) {
      std::vector<double> x(n);
      for (int j = 0; j < n; ++j) x[j] = centroid[j] + w * (simplex[hi][j] - centroid[j]);
      return x;
    };
    std::vector<double> xr = blend(-1.0);
    double fr = f(xr);
    if (fr < fv[lo]) {
      std::vector<double> xe = blend(-2.0);
      double fe = f(xe);
      if (fe < fr) { simplex[hi] = xe; fv[hi] = fe; }
      else { simplex[hi] = xr; fv[hi] = fr; }
    } else if (fr < fv[hi2]) {
      simplex[hi] = xr; fv[hi] = fr;
    } else {
      std::vector<double> xc = blend(0.5);
      double fc = f(xc);
      if (fc < fv[hi]) { simplex[hi] = xc; fv[hi] = fc; }
      else {
        for (int i = 0; i <= n; ++i) {
          if (i == lo) continue;
          for (int j = 0; j < n; ++j)
            simplex[i][j] = simplex[lo][j] + 0.5 * (simplex[i][j] - simplex[lo][j]);
          fv[i] = f(simplex[i]);
        }
      }
    }
  }
  int lo = 0;
  for (int i = 1; i <= n; ++i)
    if (fv[i] < fv[lo]) lo = i;
  return simplex[lo];
}

}  // namespace

std::optional<ArimaFit> fit_arima(const std::vector<double>& y, ArimaOrder order) {
  const int N = static_cast<int>(y.size());
  std::vector<std::uint8_t> obs(N, 1);
  std::vector<double> yy = y;
  int n_obs = 0;
  double mean = 0.0;
  for (int t = 0; t < N; ++t) {
    if (std::isnan(yy[t])) obs[t] = 0;
    else { mean += yy[t]; ++n_obs; }
  }
  if (n_obs < 20) return std::nullopt;
  mean /= n_obs;
  double level = order.d == 0 ? mean : 0.0;
  for (int t = 0; t < N; ++t)
    if (obs[t]) yy[t] -= level;

  auto objective = [&](const std::vector<double>& u) {
    std::vector<double> uar(u.begin(), u.begin() + order.p);
    std::vector<double> uma(u.begin() + order.p, u.end());
    std::vector<double> ar = pacf_to_coeffs(uar);
    std::vector<double> ma = pacf_to_coeffs(uma);
    std::vector<double> ar_full = expand_with_differencing(ar, order.d);
    return -arima_loglik(yy, obs, ar_full, ma, nullptr);
  };

  std::vector<double> u0(order.p + order.q, 0.1);
  std::vector<double> u = nelder_mead(objective, u0, 200 * std::max(1, order.p + order.q));

  ArimaFit fit;
  fit.order = order;
  fit.mean = level;
  {
    std::vector<double> uar(u.begin(), u.begin() + order.p);
    std::vector<double> uma(u.begin() + order.p, u.end());
    fit.ar = pacf_to_coeffs(uar);
    fit.ma = pacf_to_coeffs(uma);
  }
  std::vector<double> ar_full = expand_with_differencing(fit.ar, order.d);
  fit.loglik = arima_loglik(yy, obs, ar_full, fit.ma, &fit.sigma2);
  if (!std::isfinite(fit.loglik)) return std::nullopt;

  int k = order.p + order.q + 1 + (order.d == 0 ? 1 : 0);
  int n_eff = n_obs - kConditionOn;
  if (n_eff <= k + 1) return std::nullopt;
  fit.aicc = -2.0 * fit.loglik + 2.0 * k +
             2.0 * k * (k + 1.0) / static_cast<double>(n_eff - k - 1);
  return fit;
}

ArimaImputation impute_arima(const std::vector<double>& y,
                             const std::vector<std::uint8_t>& observed,
                             int max_p, int max_d, int max_q) {
  const int N = static_cast<int>(y.size());
  ArimaImputation out;
  out.imputed = y;

  std::vector<double> masked(N);
  for (int t = 0; t < N; ++t)
    masked[t] = observed[t] ? y[t] : std::numeric_limits<double>::quiet_NaN();

  std::optional<ArimaFit> best;
  for (int d = 0; d <= max_d; ++d)
    for (int p = 0; p <= max_p; ++p)
      for (int q = 0; q <= max_q; ++q) {
        auto fit = fit_arima(masked, {p, d, q});
        if (fit && (!best || fit->aicc < best->aicc)) best = fit;
      }

  auto linear_fallback = [&]() {
    int prev = -1;
    for (int i = 0; i < N; ++i) {
      if (!observed[i]) continue;
      if (prev < 0)
        for (int j = 0; j < i; ++j) out.imputed[j] = y[i];
      else
        for (int j = prev + 1; j < i; ++j) {
          double w = static_cast<double>(j - prev) / (i - prev);
          out.imputed[j] = (1 - w) * y[prev] + w * y[i];
        }
      prev = i;
    }
    for (int j = prev + 1; j < N; ++j) out.imputed[j] = y[prev];
    out.fallback_linear = true;
  };

  if (!best) {
    linear_fallback();
    return out;
  }
  out.model = best;

  // Smoothed state means at the selected order.
  std::vector<double> ar_full = expand_with_differencing(best->ar, best->order.d);
  const int r = std::max(static_cast<int>(ar_full.size()),
                         static_cast<int>(best->ma.size()) + 1);
  MatrixXd Tm = MatrixXd::Zero(r, r);
  for (int i = 0; i < r; ++i) {
    if (i < static_cast<int>(ar_full.size())) Tm(i, 0) = ar_full[i];
    if (i + 1 < r) Tm(i, i + 1) = 1.0;
  }
  VectorXd rvec = VectorXd::Zero(r);
  rvec(0) = 1.0;
  for (std::size_t i = 0; i < best->ma.size(); ++i) rvec(i + 1) = best->ma[i];
  MatrixXd Q = best->sigma2 * rvec * rvec.transpose();

  std::vector<VectorXd> a_pred(N), a_filt(N);
  std::vector<MatrixXd> P_pred(N), P_filt(N);
  VectorXd a = VectorXd::Zero(r);
  MatrixXd P = 1e6 * MatrixXd::Identity(r, r);
  for (int t = 0; t < N; ++t) {
    a_pred[t] = a;
    P_pred[t] = P;
    if (observed[t]) {
      double S = P(0, 0);
      if (S > 1e-300) {
        double e = (y[t] - best->mean) - a(0);
        VectorXd K = P.col(0) / S;
        a += K * e;
        P -= K * P.row(0);
        symmetrize(P);
      }
    }
    a_filt[t] = a;
    P_filt[t] = P;
    a = Tm * a;
    P = Tm * P * Tm.transpose() + Q;
    symmetrize(P);
  }
  VectorXd as = a_filt[N - 1];
  MatrixXd Ps = P_filt[N - 1];
  std::vector<double> smoothed(N);
  smoothed[N - 1] = as(0);
  for (int t = N - 2; t >= 0; --t) {
    MatrixXd Pp = Tm * P_filt[t] * Tm.transpose() + Q;
    symmetrize(Pp);
    MatrixXd J = P_filt[t] * Tm.transpose() * psd_pinv(Pp);
    as = a_filt[t] + J * (as - Tm * a_filt[t]);
    Ps = P_filt[t] + J * (Ps - Pp) * J.transpose();
    smoothed[t] = as(0);
  }
  for (int t = 0; t < N; ++t)
    if (!observed[t]) out.imputed[t] = smoothed[t] + best->mean;
  return out;
}

}  // namespace mcemssm
