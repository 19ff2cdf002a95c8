// SPDX-License-Identifier: Apache-2.0
//
// Quadratic-expectation operators of the zero-mean part H~ = U (S^{1/2} o W) V^H:
//   eta(Ct)  = E[H~ Ct H~^H] = U Lambda(Ct) U^H
//   etat(C)  = E[H~^H C H~]  = V LambdaT(C) V^H
// with Lambda_ii = sum_j S_ij [V^H Ct V]_jj and LambdaT_ii = sum_j S_ji [U^H C U]_jj.

#pragma once

#include "robprec/channel_model.hpp"
#include "robprec/linalg.hpp"

#include <vector>

namespace robprec {

/// Variance profile S (Xi^2 for a posterior, Omega for a priori) with its bases.
template <typename Real>
struct OperatorKernel {
  CMatrix<Real> U;
  RMatrix<Real> S;
  DftPtr<Real> dft;

  Eigen::Index rx() const { return S.rows(); }
  Eigen::Index tx() const { return S.cols(); }
};

namespace detail {
template <typename Real>
void require_hermitian(const CMatrix<Real>& c, const char* who) {
  if (c.rows() != c.cols()) throw invalid_argument(std::string(who) + ": input is not square");
  if (hermitian_defect(c) > Real(1e-8)) throw invalid_argument(std::string(who) + ": input is not Hermitian");
}
}  // namespace detail

/// Diagonal of Lambda(Ct) as a vector of length M_k.
template <typename Real>
RVector<Real> lambda_fn(const OperatorKernel<Real>& kernel, const CMatrix<Real>& ctilde) {
  detail::require_hermitian(ctilde, "lambda_fn");
  const RVector<Real> beam = kernel.dft->beam_diagonal(hermitian_part(ctilde));
  return kernel.S * beam;
}

/// Lambda from precomputed beam powers, diag(V^H Ct V).
template <typename Real>
RVector<Real> lambda_from_beams(const OperatorKernel<Real>& kernel, const RVector<Real>& beam) {
  return kernel.S * beam;
}

/// Diagonal of LambdaT(C) as a vector of length M_t.
template <typename Real>
RVector<Real> lambda_tilde_fn(const OperatorKernel<Real>& kernel, const CMatrix<Real>& c) {
  detail::require_hermitian(c, "lambda_tilde_fn");
  const CMatrix<Real> rotated = kernel.U.adjoint() * hermitian_part(c) * kernel.U;
  const RVector<Real> d = rotated.diagonal().real();
  return kernel.S.transpose() * d;
}

template <typename Real>
CMatrix<Real> eta(const OperatorKernel<Real>& kernel, const CMatrix<Real>& ctilde) {
  const RVector<Real> lam = lambda_fn(kernel, ctilde);
  return hermitian_part(kernel.U * lam.template cast<Complex<Real>>().asDiagonal() * kernel.U.adjoint());
}

template <typename Real>
CMatrix<Real> eta_tilde(const OperatorKernel<Real>& kernel, const CMatrix<Real>& c) {
  return kernel.dft->circulant(lambda_tilde_fn(kernel, c));
}

/// eta(Ct) for Ct = P P^H given as a stacked beam-power vector.
template <typename Real>
CMatrix<Real> eta_from_beams(const OperatorKernel<Real>& kernel, const RVector<Real>& beam) {
  const RVector<Real> lam = kernel.S * beam;
  return hermitian_part(kernel.U * lam.template cast<Complex<Real>>().asDiagonal() * kernel.U.adjoint());
}

/// CSI the transmitter holds for one user at one block: conditional mean and
/// the kernel of the residual.
template <typename Real>
struct UserCsi {
  CMatrix<Real> hhat;  // M_k x M_t
  OperatorKernel<Real> kernel;
};

/// CSI for all users at one block.
template <typename Real>
struct BlockCsi {
  std::vector<UserCsi<Real>> users;
  DftPtr<Real> dft;

  std::size_t num_users() const { return users.size(); }
  Eigen::Index tx() const { return dft->size(); }
};

/// Zero-mean CSI from the a priori statistics: Hhat = 0, S = Omega.
template <typename Real>
BlockCsi<Real> statistical_csi(const std::vector<UserStatistics<Real>>& stats, DftPtr<Real> dft) {
  BlockCsi<Real> csi;
  csi.dft = dft;
  for (const auto& s : stats) {
    csi.users.push_back({CMatrix<Real>::Zero(s.rx(), s.tx()), {s.U, s.omega, dft}});
  }
  return csi;
}

/// Deterministic CSI: Hhat = H, S = 0.
template <typename Real>
BlockCsi<Real> perfect_csi(const std::vector<CMatrix<Real>>& channels, DftPtr<Real> dft) {
  BlockCsi<Real> csi;
  csi.dft = dft;
  for (const auto& h : channels) {
    csi.users.push_back({h, {CMatrix<Real>::Identity(h.rows(), h.rows()), RMatrix<Real>::Zero(h.rows(), h.cols()), dft}});
  }
  return csi;
}

/// One draw of H = Hhat + U (S^{1/2} o W) V^H.
template <typename Real>
CMatrix<Real> sample_posterior(const UserCsi<Real>& user, Rng& rng) {
  const auto& k = user.kernel;
  const CMatrix<Real> w = complex_gaussian<Real>(k.rx(), k.tx(), rng);
  const CMatrix<Real> core = k.S.array().sqrt().matrix().template cast<Complex<Real>>().cwiseProduct(w);
  return user.hhat + k.U * core * k.dft->matrix().adjoint();
}

/// R_k = sigma^2 I + sum_{l != k} (Hhat P_l P_l^H Hhat^H + eta(P_l P_l^H)).
template <typename Real>
CMatrix<Real> interference_covariance(const BlockCsi<Real>& csi, const std::vector<CMatrix<Real>>& precoders,
                                      std::size_t k, Real sigma2_z) {
  if (!(sigma2_z > Real(0))) throw invalid_argument("interference_covariance: sigma2_z must be positive");
  const auto& user = csi.users.at(k);
  const Eigen::Index mk = user.hhat.rows();
  CMatrix<Real> r = sigma2_z * CMatrix<Real>::Identity(mk, mk);
  RVector<Real> beams = RVector<Real>::Zero(csi.tx());
  bool any = false;
  for (std::size_t l = 0; l < precoders.size(); ++l) {
    if (l == k || precoders[l].size() == 0) continue;
    const CMatrix<Real> hp = user.hhat * precoders[l];
    r.noalias() += hp * hp.adjoint();
    beams += csi.dft->beam_powers(precoders[l]);
    any = true;
  }
  if (any) r += eta_from_beams(user.kernel, beams);
  return hermitian_part(r);
}

/// Same as interference_covariance with precomputed beam powers per user.
template <typename Real>
CMatrix<Real> interference_covariance(const BlockCsi<Real>& csi, const std::vector<CMatrix<Real>>& precoders,
                                      const std::vector<RVector<Real>>& beam_powers, std::size_t k, Real sigma2_z) {
  if (!(sigma2_z > Real(0))) throw invalid_argument("interference_covariance: sigma2_z must be positive");
  const auto& user = csi.users.at(k);
  const Eigen::Index mk = user.hhat.rows();
  CMatrix<Real> r = sigma2_z * CMatrix<Real>::Identity(mk, mk);
  RVector<Real> beams = RVector<Real>::Zero(csi.tx());
  for (std::size_t l = 0; l < precoders.size(); ++l) {
    if (l == k) continue;
    const CMatrix<Real> hp = user.hhat * precoders[l];
    r.noalias() += hp * hp.adjoint();
    beams += beam_powers[l];
  }
  r += eta_from_beams(user.kernel, beams);
  return hermitian_part(r);
}

/// E[H^H C H] = Hhat^H C Hhat + etat(C).
template <typename Real>
CMatrix<Real> expected_gram(const UserCsi<Real>& user, const CMatrix<Real>& c) {
  CMatrix<Real> out = user.hhat.adjoint() * c * user.hhat;
  out += eta_tilde(user.kernel, c);
  return hermitian_part(out);
}

}  // namespace robprec
