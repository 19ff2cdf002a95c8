// SPDX-License-Identifier: Apache-2.0
//
// A posteriori channel model given the block-1 pilot observation:
//   H_kn = Hhat_kn + U_k (Xi_kn o W) V^H,
//   Hhat_kn = a^{n-1} U (Delta o U^H X^* Y^T V) V^H,
//   Xi^2 = Omega - a^{2(n-1)} Delta o Omega.

#pragma once

#include "robprec/channel_model.hpp"
#include "robprec/operators.hpp"

#include <cmath>
#include <vector>

namespace robprec {

/// Delta_ij = Omega_ij / (Omega_ij + sigma2); zero wherever Omega_ij = 0.
template <typename Real>
RMatrix<Real> delta_matrix(const UserStatistics<Real>& stats, Real sigma2_bs) {
  if (sigma2_bs < Real(0)) throw invalid_argument("delta_matrix: negative noise variance");
  RMatrix<Real> d(stats.rx(), stats.tx());
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      const Real w = stats.omega(i, j);
      d(i, j) = w > Real(0) ? w / (w + sigma2_bs) : Real(0);
    }
  }
  return d;
}

template <typename Real>
Real aging_factor(Real alpha, int block) {
  if (block < 1) throw invalid_argument("block index starts at 1");
  return block == 1 ? Real(1) : std::pow(alpha, Real(block - 1));
}

/// Elementwise conditional variance at block n (1-based).
template <typename Real>
RMatrix<Real> xi2_matrix(const UserStatistics<Real>& stats, Real sigma2_bs, int block) {
  const Real a = aging_factor(stats.alpha, block);
  const RMatrix<Real> delta = delta_matrix(stats, sigma2_bs);
  RMatrix<Real> out = stats.omega - (a * a) * delta.cwiseProduct(stats.omega);
  return out.cwiseMax(Real(0));
}

/// Conditional mean of H_kn for the user whose pilot is `pilot`.
template <typename Real>
CMatrix<Real> mmse_estimate(const CMatrix<Real>& y, const CMatrix<Real>& pilot, const UserStatistics<Real>& stats,
                            const DftMatrix<Real>& dft, Real sigma2_bs, int block) {
  if (y.rows() != dft.size() || pilot.cols() != y.cols() || pilot.rows() != stats.rx() || stats.tx() != dft.size())
    throw invalid_argument("mmse_estimate: shape mismatch");
  const CMatrix<Real> projected = stats.U.adjoint() * pilot.conjugate() * y.transpose() * dft.matrix();
  const CMatrix<Real> shrunk = delta_matrix(stats, sigma2_bs).template cast<Complex<Real>>().cwiseProduct(projected);
  return aging_factor(stats.alpha, block) * (stats.U * shrunk * dft.matrix().adjoint());
}

/// Per-user, per-block posterior. Blocks are indexed 1..N_b; block 1 carries
/// the pilots and blocks 2..N_b are the data blocks.
template <typename Real>
struct PosteriorModel {
  std::vector<UserStatistics<Real>> stats;
  DftPtr<Real> dft;
  Real sigma2_bs = 0;
  std::vector<std::vector<CMatrix<Real>>> hhat;  // [k][n-1]
  std::vector<std::vector<RMatrix<Real>>> xi2;   // [k][n-1]

  int blocks() const { return hhat.empty() ? 0 : int(hhat.front().size()); }
  std::size_t num_users() const { return stats.size(); }

  BlockCsi<Real> block_csi(int block) const {
    if (block < 1 || block > blocks()) throw invalid_argument("block index out of range");
    BlockCsi<Real> csi;
    csi.dft = dft;
    for (std::size_t k = 0; k < stats.size(); ++k)
      csi.users.push_back({hhat[k][block - 1], {stats[k].U, xi2[k][block - 1], dft}});
    return csi;
  }
};

/// Builds the posterior of every user and block from one uplink observation.
/// `stats[k].alpha` is the aging coefficient the transmitter assumes.
template <typename Real>
PosteriorModel<Real> build_posterior(const CMatrix<Real>& y, const std::vector<CMatrix<Real>>& pilots,
                                     const std::vector<UserStatistics<Real>>& stats, DftPtr<Real> dft, Real sigma2_bs,
                                     int blocks) {
  if (pilots.size() != stats.size()) throw invalid_argument("build_posterior: pilots/statistics count mismatch");
  if (blocks < 1) throw invalid_argument("build_posterior: need at least one block");
  PosteriorModel<Real> model;
  model.stats = stats;
  model.dft = dft;
  model.sigma2_bs = sigma2_bs;
  model.hhat.resize(stats.size());
  model.xi2.resize(stats.size());
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const CMatrix<Real> base = mmse_estimate(y, pilots[k], stats[k], *dft, sigma2_bs, 1);
    for (int n = 1; n <= blocks; ++n) {
      model.hhat[k].push_back(aging_factor(stats[k].alpha, n) * base);
      model.xi2[k].push_back(xi2_matrix(stats[k], sigma2_bs, n));
    }
  }
  return model;
}

}  // namespace robprec
