#include "mcemssm/mcem.hpp"

#include <cmath>

#include "mcemssm/stats.hpp"

namespace mcemssm {

RowData make_row_data(const TimeSeriesDataset& data, const ExpandedModel& em,
                      const MissingPattern& pattern, const VectorXd& y_filled) {
  RowData rd;
  std::map<int, double> fill;
  for (int t : pattern.t_mis) fill[t] = y_filled(t - 1);
  // Outcomes missing inside the burn-in window (t <= q) also feed lag slots.
  for (int t = 1; t <= em.spec.q; ++t)
    if (!data.y_observed[t - 1]) fill[t] = y_filled(t - 1);

  rd.rows = build_design(data, em, fill);
  const int n = static_cast<int>(rd.rows.size());
  rd.y_rows = VectorXd::Zero(n);
  rd.row_observed.assign(n, 0);
  rd.status.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    int t = rd.rows[i].t;
    if (pattern.t_mis.count(t)) {
      rd.status[i] = 2;
      rd.missing_rows.push_back(i);
    } else {
      rd.row_observed[i] = 1;
      rd.y_rows(i) = data.y(t - 1);
      rd.status[i] = pattern.t_obs1.count(t) ? 1 : 0;
    }
  }
  return rd;
}

namespace {

MomentAccumulators exact_moments(const Theta& theta, const RowData& rd) {
  FilterResult fr = kalman_filter(theta, rd.rows, rd.y_rows, rd.row_observed);
  SmootherResult sr = kalman_smoother(theta, fr);
  const int n = fr.n_rows;

  MomentAccumulators acc;
  acc.n = n;
  acc.d = theta.dim();
  acc.draws = 0;
  acc.theta_mean.resize(n + 1);
  acc.theta_cov.resize(n + 1);
  acc.lag_one.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    acc.theta_mean[i] = sr.smoothed[i].mean;
    acc.theta_cov[i] = sr.smoothed[i].cov;
    if (i > 0) acc.lag_one[i] = sr.lag_one[i];
  }
  return acc;
}

}  // namespace

EStepResult e_step(const Theta& theta, const ExpandedModel& em, RowData& rd,
                   VectorXd& y_filled, int M, int burn_in, Rng& rng,
                   bool exact_path, bool store_chain) {
  const int n = static_cast<int>(rd.rows.size());
  const int d = theta.dim();
  if (n == 0) throw std::invalid_argument("e_step: no analysis rows");

  EStepResult es;

  std::vector<int> rw_cols;
  for (int c = 0; c < em.d; ++c)
    if (em.columns[c].random_walk) rw_cols.push_back(c);

  if (exact_path && rd.missing_rows.empty()) {
    es.exact = true;
    es.acc = exact_moments(theta, rd);
    if (store_chain) {
      FilterResult fr = kalman_filter(theta, rd.rows, rd.y_rows, rd.row_observed);
      es.state0_chain = MatrixXd(M, d);
      es.rw_columns = rw_cols;
      for (int c : rw_cols) es.rw_chains.emplace_back(M, n + 1);
      for (int m = 0; m < M; ++m) {
        MatrixXd path = ffbs_sample(theta, fr, rng);
        es.state0_chain.row(m) = path.row(0);
        for (std::size_t k = 0; k < rw_cols.size(); ++k)
          es.rw_chains[k].row(m) = path.col(rw_cols[k]).transpose();
      }
    }
    return es;
  }

  // Gibbs sweeps: state path by FFBS, then missing outcomes in
  // increasing time order from their conditional given the path.
  std::vector<VectorXd> sum_theta(n + 1, VectorXd::Zero(d));
  std::vector<MatrixXd> sum_outer(n + 1, MatrixXd::Zero(d, d));
  std::vector<MatrixXd> sum_cross(n + 1, MatrixXd::Zero(d, d));

  std::vector<int> obs1_rows;
  for (int i = 0; i < n; ++i)
    if (rd.status[i] == 1) obs1_rows.push_back(i);
  std::vector<double> sum_a(obs1_rows.size(), 0.0), sum_b(obs1_rows.size(), 0.0);
  std::vector<double> sum_b2(obs1_rows.size(), 0.0), sum_ab(obs1_rows.size(), 0.0);

  std::map<int, double> imp_sum;
  for (int i : rd.missing_rows) imp_sum[rd.rows[i].t] = 0.0;

  if (store_chain) {
    es.state0_chain = MatrixXd(M, d);
    es.rw_columns = rw_cols;
    for (int c : rw_cols) es.rw_chains.emplace_back(M, n + 1);
  }

  std::normal_distribution<double> N01(0.0, 1.0);
  const double r_sd = std::sqrt(theta.R);
  int kept = 0;

  // The state update must condition on the current imputations as if
  // they were observations: the joint of (state path, missing
  // outcomes) given the observed data factorizes over every row, so
  // the full conditional of the path keeps the missing rows' outcome
  // factors evaluated at the current draws.
  VectorXd y_rows_aug = rd.y_rows;
  std::vector<std::uint8_t> all_observed(n, 1);

  for (int sweep = 0; sweep < burn_in + M; ++sweep) {
    refresh_lag_slots(rd.rows, em, y_filled);
    for (int i : rd.missing_rows) y_rows_aug(i) = y_filled(rd.rows[i].t - 1);
    FilterResult fr = kalman_filter(theta, rd.rows, y_rows_aug, all_observed);
    MatrixXd path = ffbs_sample(theta, fr, rng);

    for (int i : rd.missing_rows) {
      DesignRow& row = rd.rows[i];
      // Earlier draws of this sweep may feed this row's lag slots.
      for (int c = 0; c < em.d; ++c)
        if (row.lag_missing[c])
          row.values(c) = y_filled(row.t - em.columns[c].outcome_lag - 1);
      double prior_mean = row.values.dot(path.row(i + 1));

      // Full conditional of y_t given the state path and every other
      // outcome: the N(F_t theta_t, R) factor above plus one factor
      // per later row that carries y_t in a lag slot.
      double coef2_sum = 0.0;
      double cross_sum = 0.0;
      for (int l = 1; l <= em.spec.q; ++l) {
        int j = i + l;
        if (j >= n) break;
        DesignRow& succ = rd.rows[j];
        if (!succ.any_lag_missing) continue;
        for (int c = 0; c < em.d; ++c)
          if (succ.lag_missing[c])
            succ.values(c) = y_filled(succ.t - em.columns[c].outcome_lag - 1);
        double coef = 0.0;
        for (int c = 0; c < em.d; ++c)
          if (succ.lag_missing[c] && succ.t - em.columns[c].outcome_lag == row.t)
            coef += path(j + 1, c);
        if (coef == 0.0) continue;
        double pred = succ.values.dot(path.row(j + 1));
        double partial = y_filled(succ.t - 1) - (pred - coef * y_filled(row.t - 1));
        coef2_sum += coef * coef;
        cross_sum += coef * partial;
      }
      double denom = 1.0 + coef2_sum;
      double mean = (prior_mean + cross_sum) / denom;
      y_filled(row.t - 1) = mean + r_sd / std::sqrt(denom) * N01(rng);
    }
    refresh_lag_slots(rd.rows, em, y_filled);

    if (sweep < burn_in) continue;

    for (int i = 0; i <= n; ++i) {
      VectorXd th = path.row(i).transpose();
      sum_theta[i] += th;
      sum_outer[i].noalias() += th * th.transpose();
      if (i > 0) sum_cross[i].noalias() += th * path.row(i - 1);
    }
    for (std::size_t k = 0; k < obs1_rows.size(); ++k) {
      const DesignRow& row = rd.rows[obs1_rows[k]];
      const auto theta_row = path.row(obs1_rows[k] + 1);
      double a = 0.0, b = 0.0;
      for (int c = 0; c < em.d; ++c) {
        double v = row.values(c) * theta_row(c);
        (row.lag_missing[c] ? b : a) += v;
      }
      sum_a[k] += a;
      sum_b[k] += b;
      sum_b2[k] += b * b;
      sum_ab[k] += a * b;
    }
    for (int i : rd.missing_rows) imp_sum[rd.rows[i].t] += y_filled(rd.rows[i].t - 1);

    if (store_chain) {
      es.state0_chain.row(kept) = path.row(0);
      for (std::size_t k = 0; k < rw_cols.size(); ++k)
        es.rw_chains[k].row(kept) = path.col(rw_cols[k]).transpose();
    }
    ++kept;
  }

  const double inv_m = 1.0 / static_cast<double>(M);
  MomentAccumulators& acc = es.acc;
  acc.n = n;
  acc.d = d;
  acc.draws = M;
  acc.theta_mean.resize(n + 1);
  acc.theta_cov.resize(n + 1);
  acc.lag_one.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    acc.theta_mean[i] = sum_theta[i] * inv_m;
    acc.theta_cov[i] =
        sum_outer[i] * inv_m - acc.theta_mean[i] * acc.theta_mean[i].transpose();
    symmetrize(acc.theta_cov[i]);
    if (i > 0)
      acc.lag_one[i] =
          sum_cross[i] * inv_m - acc.theta_mean[i] * acc.theta_mean[i - 1].transpose();
  }
  for (std::size_t k = 0; k < obs1_rows.size(); ++k) {
    MomentAccumulators::Obs1Moments om;
    om.row = obs1_rows[k];
    double abar = sum_a[k] * inv_m;
    om.mean_mis = sum_b[k] * inv_m;
    om.var_mis = sum_b2[k] * inv_m - om.mean_mis * om.mean_mis;
    om.cov_obs_mis = sum_ab[k] * inv_m - abar * om.mean_mis;
    acc.obs1.push_back(om);
  }
  for (auto& [t, s] : imp_sum) es.imputation_mean[t] = s * inv_m;
  return es;
}

namespace {

// Observed-slot contribution moments at an obs1 row: mean and
// variance of a = F^(0) theta^(0), from the full-state moments.
std::pair<double, double> obs_part_moments(const MomentAccumulators& acc,
                                           const DesignRow& row, int state_idx) {
  const VectorXd& mean = acc.theta_mean[state_idx];
  const MatrixXd& cov = acc.theta_cov[state_idx];
  const int d = static_cast<int>(mean.size());
  VectorXd f0 = VectorXd::Zero(d);
  for (int c = 0; c < d; ++c)
    if (!row.lag_missing[c]) f0(c) = row.values(c);
  return {f0.dot(mean), f0.dot(cov * f0)};
}

}  // namespace

MStepResult m_step(const MomentAccumulators& acc, const ExpandedModel& em,
                   const RowData& rd) {
  const int n = acc.n;
  const int d = acc.d;
  MStepResult out;
  Theta& th = out.theta;

  th.mu0 = acc.theta_mean[0];
  th.sigma0 = acc.theta_cov[0] +
              (acc.theta_mean[0] - th.mu0) * (acc.theta_mean[0] - th.mu0).transpose();
  symmetrize(th.sigma0);

  MatrixXd q_full = MatrixXd::Zero(d, d);
  for (int i = 1; i <= n; ++i) {
    VectorXd dm = acc.theta_mean[i] - acc.theta_mean[i - 1];
    q_full += acc.theta_cov[i] + acc.theta_cov[i - 1] - acc.lag_one[i] -
              acc.lag_one[i].transpose() + dm * dm.transpose();
  }
  q_full /= static_cast<double>(n);
  // Structural projection: diagonal Q, zero on static coordinates.
  th.Q = MatrixXd::Zero(d, d);
  for (int c = 0; c < d; ++c)
    if (em.columns[c].random_walk) th.Q(c, c) = std::max(0.0, q_full(c, c));

  double r_sum = 0.0;
  int n_obs = 0;
  std::size_t obs1_idx = 0;
  for (int i = 0; i < static_cast<int>(rd.rows.size()); ++i) {
    if (rd.status[i] == 2) continue;
    ++n_obs;
    const DesignRow& row = rd.rows[i];
    if (rd.status[i] == 0) {
      double resid = rd.y_rows(i) - row.values.dot(acc.theta_mean[i + 1]);
      r_sum += resid * resid + row.values.dot(acc.theta_cov[i + 1] * row.values);
    } else {
      while (obs1_idx < acc.obs1.size() && acc.obs1[obs1_idx].row < i) ++obs1_idx;
      if (obs1_idx >= acc.obs1.size() || acc.obs1[obs1_idx].row != i)
        throw std::logic_error("m_step: accumulator missing an obs1 row");
      const auto& om = acc.obs1[obs1_idx];
      auto [abar, avar] = obs_part_moments(acc, row, i + 1);
      double resid = rd.y_rows(i) - abar - om.mean_mis;
      r_sum += resid * resid + avar + om.var_mis + 2.0 * om.cov_obs_mis;
    }
  }
  if (n_obs == 0) throw std::invalid_argument("m_step: no observed rows");
  th.R = r_sum / static_cast<double>(n_obs);
  if (th.R < 1e-8) {
    th.R = 1e-8;
    out.r_floored = true;
  }
  return out;
}

double q_function(const MomentAccumulators& acc, const Theta& theta,
                  const ExpandedModel& em, const RowData& rd) {
  const int n = acc.n;
  bool dropped = false;
  double v = 0.0;

  MatrixXd s0_inv = psd_pinv(theta.sigma0);
  v += -0.5 * log_pseudo_det(theta.sigma0, &dropped);
  VectorXd dm0 = acc.theta_mean[0] - theta.mu0;
  v += -0.5 * (s0_inv * (acc.theta_cov[0] + dm0 * dm0.transpose())).trace();

  MatrixXd q_inv = psd_pinv(theta.Q);
  v += -0.5 * n * log_pseudo_det(theta.Q, &dropped);
  for (int i = 1; i <= n; ++i) {
    VectorXd dm = acc.theta_mean[i] - acc.theta_mean[i - 1];
    MatrixXd m = acc.theta_cov[i] + acc.theta_cov[i - 1] - acc.lag_one[i] -
                 acc.lag_one[i].transpose() + dm * dm.transpose();
    v += -0.5 * (q_inv * m).trace();
  }

  double r_sum = 0.0;
  int n_obs = 0;
  std::size_t obs1_idx = 0;
  for (int i = 0; i < static_cast<int>(rd.rows.size()); ++i) {
    if (rd.status[i] == 2) continue;
    ++n_obs;
    const DesignRow& row = rd.rows[i];
    if (rd.status[i] == 0) {
      double resid = rd.y_rows(i) - row.values.dot(acc.theta_mean[i + 1]);
      r_sum += resid * resid + row.values.dot(acc.theta_cov[i + 1] * row.values);
    } else {
      while (obs1_idx < acc.obs1.size() && acc.obs1[obs1_idx].row < i) ++obs1_idx;
      const auto& om = acc.obs1[obs1_idx];
      auto [abar, avar] = obs_part_moments(acc, row, i + 1);
      double resid = rd.y_rows(i) - abar - om.mean_mis;
      r_sum += resid * resid + avar + om.var_mis + 2.0 * om.cov_obs_mis;
    }
  }
  v += -0.5 * n_obs * std::log(theta.R) - 0.5 * r_sum / theta.R;
  return v;
}

CredibleInterval credible_interval(const std::vector<double>& chain, double level) {
  if (chain.size() < 20)
    throw std::invalid_argument("credible_interval: chain shorter than 20 draws");
  double alpha = (1.0 - level) / 2.0;
  return {quantile(chain, alpha), quantile(chain, 1.0 - alpha)};
}

// ---------------------------------------------------------------------------
// run_mcem
// ---------------------------------------------------------------------------

namespace {

// Linear interpolation between flanking observed values, nearest
// value at the edges.
VectorXd interpolate_missing(const VectorXd& y, const std::vector<std::uint8_t>& observed) {
  const int T = static_cast<int>(y.size());
  VectorXd out = y;
  int prev = -1;
  for (int i = 0; i < T; ++i) {
    if (!observed[i]) continue;
    if (prev < 0) {
      for (int j = 0; j < i; ++j) out(j) = y(i);
    } else {
      for (int j = prev + 1; j < i; ++j) {
        double w = static_cast<double>(j - prev) / static_cast<double>(i - prev);
        out(j) = (1.0 - w) * y(prev) + w * y(i);
      }
    }
    prev = i;
  }
  if (prev < 0) throw std::invalid_argument("run_mcem: outcome series entirely missing");
  for (int j = prev + 1; j < T; ++j) out(j) = y(prev);
  return out;
}

Theta initialize_theta(const ExpandedModel& em, const RowData& rd,
                       const MCEMConfig& cfg) {
  const int d = em.d;
  Theta th;
  th.mu0 = VectorXd::Zero(d);
  th.sigma0 = cfg.sigma0_scale * MatrixXd::Identity(d, d);
  th.Q = MatrixXd::Zero(d, d);
  for (int c = 0; c < d; ++c)
    if (em.columns[c].random_walk) th.Q(c, c) = cfg.q_init;
  th.R = 1.0;

  // OLS on fully observed rows; ridge fallback over all rows when the
  // complete subset is too small or degenerate.
  std::vector<int> keep;
  for (int i = 0; i < static_cast<int>(rd.rows.size()); ++i)
    if (rd.status[i] == 0) keep.push_back(i);
  bool complete_ok = static_cast<int>(keep.size()) > d + 2;
  if (!complete_ok) {
    keep.clear();
    for (int i = 0; i < static_cast<int>(rd.rows.size()); ++i)
      if (rd.status[i] != 2) keep.push_back(i);
  }
  MatrixXd X(keep.size(), d);
  VectorXd y(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    X.row(k) = rd.rows[keep[k]].values.transpose();
    y(k) = rd.y_rows(keep[k]);
  }
  try {
    if (complete_ok) {
      OlsFit fit = ols_fit(X, y);
      th.mu0 = fit.coefficients;
      th.R = std::max(fit.sigma2, 1e-8);
      return th;
    }
  } catch (const std::exception&) {
    // fall through to ridge
  }
  MatrixXd reg = X.transpose() * X + 1e-4 * MatrixXd::Identity(d, d);
  th.mu0 = reg.ldlt().solve(X.transpose() * y);
  VectorXd resid = y - X * th.mu0;
  th.R = std::max(resid.squaredNorm() / std::max<std::size_t>(1, keep.size()), 1e-8);
  return th;
}

// Maps a Theta onto a re-segmented model: each new column inherits
// from the old column of the same base coefficient covering its
// segment midpoint. Off-diagonal sigma0 is dropped.
Theta remap_theta(const Theta& old_theta, const ExpandedModel& old_em,
                  const ExpandedModel& new_em) {
  const int d = new_em.d;
  Theta th;
  th.mu0 = VectorXd::Zero(d);
  th.sigma0 = MatrixXd::Zero(d, d);
  th.Q = MatrixXd::Zero(d, d);
  th.R = old_theta.R;
  for (int c = 0; c < d; ++c) {
    const auto& col = new_em.columns[c];
    int mid = (col.seg_begin + col.seg_end) / 2;
    int src = old_em.column_at(col.base_coef, mid);
    th.mu0(c) = old_theta.mu0(src);
    th.sigma0(c, c) = old_theta.sigma0(src, src);
    if (col.random_walk) th.Q(c, c) = old_theta.Q(src, src);
  }
  return th;
}

// Smoothed trajectory of a periodic-stable coefficient under a
// temporary random-walk encoding, for change-point detection.
std::vector<double> detection_trajectory(const TimeSeriesDataset& data,
                                         const ModelSpec& spec, int base_coef,
                                         const std::map<int, std::vector<int>>& segments,
                                         const Theta& theta, const ExpandedModel& em,
                                         const MissingPattern& pattern,
                                         const VectorXd& y_filled,
                                         const MCEMConfig& cfg) {
  ModelSpec aux = spec;
  aux.roles[base_coef] = CoefficientRole::RandomWalk;
  aux.segments = segments;
  aux.segments.erase(base_coef);
  ExpandedModel aux_em = ExpandedModel::build(aux, data.length());
  RowData aux_rd = make_row_data(data, aux_em, pattern, y_filled);

  Theta aux_theta = remap_theta(theta, em, aux_em);
  int col = aux_em.base_to_columns[base_coef][0];
  aux_theta.Q(col, col) = cfg.detect_q;

  FilterResult fr = kalman_filter(aux_theta, aux_rd.rows, aux_rd.y_rows, aux_rd.row_observed);
  SmootherResult sr = kalman_smoother(aux_theta, fr);
  std::vector<double> traj(aux_rd.rows.size());
  for (std::size_t i = 0; i < aux_rd.rows.size(); ++i)
    traj[i] = sr.smoothed[i + 1].mean(col);
  return traj;
}

}  // namespace

MCEMResult run_mcem(const TimeSeriesDataset& data, const ModelSpec& spec,
                    const MCEMConfig& cfg) {
  data.validate();
  cfg.validate();
  const int T = data.length();
  spec.validate(T);

  MissingPattern pattern = partition_timepoints(data.y_observed, spec.q);
  if (pattern.n_obs() == 0)
    throw std::invalid_argument("run_mcem: no observed outcomes after lag burn-in");

  Rng rng(cfg.seed);
  VectorXd y_filled = interpolate_missing(data.y, data.y_observed);

  std::map<int, std::vector<int>> segments = spec.segments;
  ModelSpec cur_spec = spec;
  cur_spec.segments = segments;
  ExpandedModel em = ExpandedModel::build(cur_spec, T);
  RowData rd = make_row_data(data, em, pattern, y_filled);
  Theta theta = initialize_theta(em, rd, cfg);

  std::vector<int> periodic_coefs;
  for (int b = 0; b < spec.base_dim(); ++b)
    if (spec.roles[b] == CoefficientRole::PeriodicStable) periodic_coefs.push_back(b);

  MCEMResult result;
  int streak = 0;
  double prev_q = std::numeric_limits<double>::quiet_NaN();
  EStepResult last_es;

  for (int j = 0; j < cfg.max_outer_iterations; ++j) {
    int M = std::min<double>(cfg.m_max, std::llround(cfg.m_initial * std::pow(cfg.m_growth_factor, j)));

    EStepResult es = e_step(theta, em, rd, y_filled, M, cfg.burn_in, rng,
                            cfg.exact_complete_estep, false);
    MStepResult ms = m_step(es.acc, em, rd);

    Theta theta_new = theta;
    if (cfg.update_mu0) theta_new.mu0 = ms.theta.mu0;
    if (cfg.update_sigma0) theta_new.sigma0 = ms.theta.sigma0;
    theta_new.Q = ms.theta.Q;
    theta_new.R = ms.theta.R;

    double delta = std::abs(theta_new.R - theta.R);
    delta = std::max(delta, (theta_new.mu0 - theta.mu0).cwiseAbs().maxCoeff());
    delta = std::max(delta, (theta_new.Q - theta.Q).diagonal().cwiseAbs().maxCoeff());

    double qval = q_function(es.acc, theta_new, em, rd);

    IterationRecord rec;
    rec.iteration = j;
    rec.draws = es.exact ? 0 : M;
    rec.q_value = qval;
    rec.max_param_delta = delta;
    rec.R = theta_new.R;
    {
      FilterResult fr = kalman_filter(theta_new, rd.rows, rd.y_rows, rd.row_observed);
      rec.observed_loglik = fr.loglik;
    }
    result.trace.push_back(rec);

    // Refresh periodic-stable segment boundaries.
    bool structure_changed = false;
    for (int b : periodic_coefs) {
      for (const auto& [t, v] : es.imputation_mean) y_filled(t - 1) = v;
      std::vector<double> traj = detection_trajectory(data, spec, b, segments,
                                                      theta_new, em, pattern,
                                                      y_filled, cfg);
      // The smoothed trajectory is far smoother than white noise, so
      // the first-difference penalty of choose_penalty collapses and
      // over-segments; scale by the overall trajectory variance
      // instead (level shifts dominate it when change points exist).
      double mean = sample_mean(traj);
      double var = 0.0;
      for (double v : traj) var += (v - mean) * (v - mean);
      var /= std::max<std::size_t>(1, traj.size() - 1);
      double penalty = cfg.penalty_scale * 2.0 * var *
                       std::log(std::max<double>(2.0, traj.size()));
      Segmentation seg = detect_changepoints(traj, penalty, cfg.min_segment_length);
      std::vector<int> cps;
      for (int cp : seg.change_points) cps.push_back(cp + spec.q);  // row -> time index
      if (cps != segments[b]) {
        segments[b] = cps;
        structure_changed = true;
      }
    }
    if (structure_changed) {
      cur_spec.segments = segments;
      ExpandedModel new_em = ExpandedModel::build(cur_spec, T);
      theta_new = remap_theta(theta_new, em, new_em);
      em = new_em;
      rd = make_row_data(data, em, pattern, y_filled);
    }

    bool q_ok = !std::isnan(prev_q) &&
                std::abs(qval - prev_q) <= cfg.tol_loglik * (std::abs(prev_q) + 1.0);
    bool p_ok = delta < cfg.tol_params;
    streak = (!structure_changed && q_ok && p_ok) ? streak + 1 : 0;
    prev_q = qval;
    theta = theta_new;

    if (streak >= cfg.consecutive_passes) {
      result.converged = true;
      break;
    }
  }

  // Final chain at the converged parameters, for trajectories,
  // imputations, and credible intervals.
  int m_ci = std::max(cfg.ci_chain_draws, 20);
  last_es = e_step(theta, em, rd, y_filled, m_ci, cfg.burn_in, rng,
                   cfg.exact_complete_estep, true);

  result.theta_hat = theta;
  result.model = em;
  result.imputations = last_es.imputation_mean;
  for (int b : periodic_coefs) result.change_points[b] = segments[b];

  const int n = static_cast<int>(rd.rows.size());
  const int base_dim = spec.base_dim();
  result.trajectories = MatrixXd::Zero(n, base_dim);
  result.row_times.resize(n);
  for (int i = 0; i < n; ++i) {
    int t = rd.rows[i].t;
    result.row_times[i] = t;
    for (int b = 0; b < base_dim; ++b) {
      int c = em.column_at(b, t);
      result.trajectories(i, b) = last_es.acc.theta_mean[i + 1](c);
    }
  }

  result.estimates = VectorXd::Zero(em.d);
  result.intervals.resize(em.d);
  const int chain_len = static_cast<int>(last_es.state0_chain.rows());
  for (int c = 0; c < em.d; ++c) {
    result.estimates(c) = last_es.acc.theta_mean[em.columns[c].random_walk ? n : 0](c);
    std::vector<double> chain(chain_len);
    if (em.columns[c].random_walk) {
      auto it = std::find(last_es.rw_columns.begin(), last_es.rw_columns.end(), c);
      const MatrixXd& rc = last_es.rw_chains[it - last_es.rw_columns.begin()];
      for (int m = 0; m < chain_len; ++m) chain[m] = rc(m, n);
      MatrixXd band(n, 2);
      std::vector<double> col(chain_len);
      for (int i = 0; i < n; ++i) {
        for (int m = 0; m < chain_len; ++m) col[m] = rc(m, i + 1);
        CredibleInterval ci = credible_interval(col, cfg.credible_level);
        band(i, 0) = ci.lower;
        band(i, 1) = ci.upper;
      }
      result.rw_bands[c] = band;
    } else {
      for (int m = 0; m < chain_len; ++m) chain[m] = last_es.state0_chain(m, c);
    }
    result.intervals[c] = credible_interval(chain, cfg.credible_level);
  }
  return result;
}

}  // namespace mcemssm
