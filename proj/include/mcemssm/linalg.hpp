#pragma once

#include <Eigen/Dense>
#include <random>

namespace mcemssm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline void symmetrize(MatrixXd& m) { m = ((m + m.transpose()) * 0.5).eval(); }

/// Pseudo-inverse of a symmetric PSD matrix. Eigenvalues below
/// tol * max_eigenvalue are treated as exactly zero.
inline MatrixXd psd_pinv(const MatrixXd& m, double tol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  const VectorXd& ev = es.eigenvalues();
  double cutoff = tol * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  VectorXd inv = VectorXd::Zero(ev.size());
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) > cutoff) inv(i) = 1.0 / ev(i);
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

/// Log pseudo-determinant (sum of log of eigenvalues above cutoff) and
/// whether any eigenvalue was dropped.
inline double log_pseudo_det(const MatrixXd& m, bool* dropped, double tol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const VectorXd& ev = es.eigenvalues();
  double cutoff = tol * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  double ld = 0.0;
  *dropped = false;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff)
      ld += std::log(ev(i));
    else
      *dropped = true;
  }
  return ld;
}

using Rng = std::mt19937_64;

/// Stream splitting: derives an independent seed from a root seed and
/// a stream index (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Draw from N(mean, cov) where cov may be singular (static
/// coordinates carry exactly zero variance). Coordinates with
/// negligible diagonal stay at the mean; the active block is sampled
/// through Cholesky with an eigenvalue fallback.
inline VectorXd mvn_sample(const VectorXd& mean, const MatrixXd& cov, Rng& rng) {
  const int d = static_cast<int>(mean.size());
  std::normal_distribution<double> N01(0.0, 1.0);

  double max_diag = 0.0;
  for (int i = 0; i < d; ++i) max_diag = std::max(max_diag, cov(i, i));
  if (max_diag <= 0.0) return mean;

  std::vector<int> active;
  active.reserve(d);
  const double tol = 1e-12 * max_diag;
  for (int i = 0; i < d; ++i)
    if (cov(i, i) > tol) active.push_back(i);

  const int k = static_cast<int>(active.size());
  MatrixXd sub(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) sub(i, j) = cov(active[i], active[j]);

  VectorXd z(k);
  for (int i = 0; i < k; ++i) z(i) = N01(rng);

  VectorXd delta;
  Eigen::LLT<MatrixXd> llt(sub);
  if (llt.info() == Eigen::Success) {
    delta = llt.matrixL() * z;
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sub);
    VectorXd sd = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    delta = es.eigenvectors() * sd.asDiagonal() * z;
  }

  VectorXd out = mean;
  for (int i = 0; i < k; ++i) out(active[i]) += delta(i);
  return out;
}

}  // namespace mcemssm
