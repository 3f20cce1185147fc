#include "mcemssm/kalman.hpp"

#include <cmath>

namespace mcemssm {

namespace {
constexpr double kLogTwoPi = 1.8378770664093453;
}

FilterResult kalman_filter(const Theta& theta, const std::vector<DesignRow>& rows,
                           const VectorXd& y_rows,
                           const std::vector<std::uint8_t>& row_observed) {
  const int n = static_cast<int>(rows.size());
  const int d = theta.dim();
  if (static_cast<int>(y_rows.size()) != n ||
      static_cast<int>(row_observed.size()) != n)
    throw std::invalid_argument("kalman_filter: row/outcome length mismatch");

  FilterResult fr;
  fr.n_rows = n;
  fr.filtered.resize(n + 1);
  fr.predicted.resize(n + 1);

  GaussianBelief prior{theta.mu0, theta.sigma0};
  symmetrize(prior.cov);
  fr.filtered[0] = prior;
  fr.predicted[0] = prior;

  VectorXd m = prior.mean;
  MatrixXd P = prior.cov;
  MatrixXd Pf(d, d);
  for (int i = 1; i <= n; ++i) {
    // Predict (G = I)
    MatrixXd Pp = P + theta.Q;
    symmetrize(Pp);
    fr.predicted[i] = {m, Pp};

    if (row_observed[i - 1]) {
      const VectorXd& F = rows[i - 1].values;
      VectorXd PpF = Pp * F;
      double S = F.dot(PpF) + theta.R;
      if (S <= 0.0) S += 1e-12;
      if (S <= 0.0)
        throw std::runtime_error("kalman_filter: non-positive innovation variance (degenerate R/Q) at t=" +
                                 std::to_string(rows[i - 1].t));
      double innov = y_rows(i - 1) - F.dot(m);
      m += PpF * (innov / S);
      Pf = Pp - (PpF * PpF.transpose()) / S;
      symmetrize(Pf);
      P = Pf;
      fr.loglik += -0.5 * (kLogTwoPi + std::log(S) + innov * innov / S);
    } else {
      P = Pp;
    }
    fr.filtered[i] = {m, P};
  }
  return fr;
}

SmootherResult kalman_smoother(const Theta& theta, const FilterResult& fr) {
  const int n = fr.n_rows;
  SmootherResult sr;
  sr.smoothed.resize(n + 1);
  sr.lag_one.resize(n + 1);
  sr.smoothed[n] = fr.filtered[n];

  for (int i = n - 1; i >= 0; --i) {
    const MatrixXd& Pf = fr.filtered[i].cov;
    const GaussianBelief& pred = fr.predicted[i + 1];
    MatrixXd J = Pf * psd_pinv(pred.cov);
    sr.smoothed[i].mean = fr.filtered[i].mean + J * (sr.smoothed[i + 1].mean - pred.mean);
    sr.smoothed[i].cov =
        Pf + J * (sr.smoothed[i + 1].cov - pred.cov) * J.transpose();
    symmetrize(sr.smoothed[i].cov);
    // Cov(theta_{i+1}, theta_i | all data) via the smoother gain
    sr.lag_one[i + 1] = sr.smoothed[i + 1].cov * J.transpose();
  }
  return sr;
}

MatrixXd ffbs_sample(const Theta& theta, const FilterResult& fr, Rng& rng) {
  const int n = fr.n_rows;
  const int d = theta.dim();
  MatrixXd path(n + 1, d);

  bool q_zero = theta.Q.cwiseAbs().maxCoeff() == 0.0;

  VectorXd state = mvn_sample(fr.filtered[n].mean, fr.filtered[n].cov, rng);
  path.row(n) = state.transpose();

  if (q_zero) {
    // Static chain: theta_i = theta_{i+1} exactly.
    for (int i = n - 1; i >= 0; --i) path.row(i) = state.transpose();
    return path;
  }

  for (int i = n - 1; i >= 0; --i) {
    const MatrixXd& Pf = fr.filtered[i].cov;
    const GaussianBelief& pred = fr.predicted[i + 1];
    MatrixXd J = Pf * psd_pinv(pred.cov);
    VectorXd mean = fr.filtered[i].mean + J * (state - pred.mean);
    MatrixXd cov = Pf - J * pred.cov * J.transpose();
    symmetrize(cov);
    state = mvn_sample(mean, cov, rng);
    path.row(i) = state.transpose();
  }
  return path;
}

OutcomePrediction predict_missing_outcome(const MatrixXd& state_path,
                                          const std::vector<DesignRow>& rows,
                                          const Theta& theta, int row_idx,
                                          const std::vector<std::uint8_t>& row_observed) {
  if (row_idx < 0 || row_idx >= static_cast<int>(rows.size()))
    throw std::invalid_argument("predict_missing_outcome: row index out of range");
  if (row_observed[row_idx])
    throw std::logic_error("predict_missing_outcome: outcome at t=" +
                           std::to_string(rows[row_idx].t) + " is observed");
  OutcomePrediction out;
  out.mean = rows[row_idx].values.dot(state_path.row(row_idx + 1));
  out.variance = theta.R;
  return out;
}

CompleteDataLogLik complete_data_loglik(const Theta& theta, const MatrixXd& state_path,
                                        const std::vector<DesignRow>& rows,
                                        const VectorXd& y_rows,
                                        const std::vector<std::uint8_t>& row_observed) {
  const int n = static_cast<int>(rows.size());
  CompleteDataLogLik out;

  bool dropped0 = false, droppedq = false;
  double ld_sigma0 = log_pseudo_det(theta.sigma0, &dropped0);
  double ld_q = log_pseudo_det(theta.Q, &droppedq);
  MatrixXd sigma0_inv = psd_pinv(theta.sigma0);
  MatrixXd q_inv = psd_pinv(theta.Q);
  out.pseudo_determinant_used = dropped0 || droppedq;

  VectorXd r0 = state_path.row(0).transpose() - theta.mu0;
  double v = -0.5 * ld_sigma0 - 0.5 * r0.dot(sigma0_inv * r0);

  v += -0.5 * n * ld_q;
  for (int i = 1; i <= n; ++i) {
    VectorXd dq = (state_path.row(i) - state_path.row(i - 1)).transpose();
    v += -0.5 * dq.dot(q_inv * dq);
  }

  int n_obs = 0;
  double rss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!row_observed[i]) continue;
    ++n_obs;
    double r = y_rows(i) - rows[i].values.dot(state_path.row(i + 1));
    rss += r * r;
  }
  v += -0.5 * n_obs * std::log(theta.R) - 0.5 * rss / theta.R;

  out.value = v;
  return out;
}

}  // namespace mcemssm
