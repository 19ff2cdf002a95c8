// SPDX-License-Identifier: Apache-2.0
//
// Deterministic equivalent of the per-user ergodic rate
//   E[logdet(I + R^{-1} H P P^H H^H)]
// for H = Hhat + U (S^{1/2} o W) V^H, obtained from the coupled fixed point
//   Phi   = I + P^H etat(Rm Gt Rm) P
//   Phit  = I + Rm eta(P G P^H) Rm
//   Gamma = etat(Rm Gt Rm) + Hhat^H Rm Phit^{-1} Rm Hhat
//   Gammat= eta(P G P^H) + Hhat P Phi^{-1} P^H Hhat^H
//   G     = (I + P^H Gamma P)^{-1},   Gt = (I + Rm Gammat Rm)^{-1}
// where Rm = R^{-1/2}.

#pragma once

#include "robprec/operators.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace robprec {

template <typename Real>
struct DEState {
  CMatrix<Real> gamma;        // M_t x M_t
  CMatrix<Real> gamma_tilde;  // M_k x M_k
  CMatrix<Real> phi;          // d x d
  CMatrix<Real> phi_tilde;    // M_k x M_k
  CMatrix<Real> g;            // d x d
  CMatrix<Real> g_tilde;      // M_k x M_k
  int iterations_used = 0;
  Real residual = 0;
};

struct DEOptions {
  double tol = 1e-9;
  int max_iter = 500;
  double damping = 0.5;
  /// Called after every sweep with (sweep index, residual) when set.
  std::function<void(int, double)> trace;
};

namespace detail {

template <typename Real>
Real relative_change(const CMatrix<Real>& now, const CMatrix<Real>& before) {
  const Real diff = (now - before).norm();
  if (diff == Real(0)) return Real(0);
  const Real scale = std::max(now.norm(), before.norm());
  return diff / scale;
}

template <typename Real>
CMatrix<Real> diag_to_complex(const RVector<Real>& d) {
  return d.template cast<Complex<Real>>().asDiagonal();
}

}  // namespace detail

/// Solves the fixed point for one user. `warm` seeds (G, Gt) when shapes match;
/// otherwise both start at the identity.
template <typename Real>
DEState<Real> solve_fixed_point(const UserCsi<Real>& user, const CMatrix<Real>& precoder, const CMatrix<Real>& r,
                                const DEOptions& options = {}, const DEState<Real>* warm = nullptr) {
  if (!(options.tol > 0)) throw invalid_argument("solve_fixed_point: tol must be positive");
  const auto& kernel = user.kernel;
  const auto& hhat = user.hhat;
  const Eigen::Index mk = hhat.rows();
  const Eigen::Index d = precoder.cols();
  if (precoder.rows() != hhat.cols() || r.rows() != mk || r.cols() != mk)
    throw invalid_argument("solve_fixed_point: shape mismatch");

  const CMatrix<Real> rm = inverse_sqrt_hpd(r);
  const CMatrix<Real> rm_h = rm * hhat;               // Rm Hhat
  const CMatrix<Real> hp = hhat * precoder;           // Hhat P
  const CMatrix<Real> vp = kernel.dft->matrix().adjoint() * precoder;  // V^H P

  DEState<Real> s;
  if (warm != nullptr && warm->g.rows() == d && warm->g_tilde.rows() == mk) {
    s.g = warm->g;
    s.g_tilde = warm->g_tilde;
  } else {
    s.g = CMatrix<Real>::Identity(d, d);
    s.g_tilde = CMatrix<Real>::Identity(mk, mk);
  }
  s.gamma = CMatrix<Real>::Zero(precoder.rows(), precoder.rows());
  s.gamma_tilde = CMatrix<Real>::Zero(mk, mk);

  const CMatrix<Real> eye_d = CMatrix<Real>::Identity(d, d);
  const CMatrix<Real> eye_k = CMatrix<Real>::Identity(mk, mk);
  Real previous = std::numeric_limits<Real>::infinity();

  for (int sweep = 1; sweep <= options.max_iter; ++sweep) {
    const CMatrix<Real> tt = hermitian_part(rm * s.g_tilde * rm);
    const CMatrix<Real> e1 = eta_tilde(kernel, tt);
    const RVector<Real> beams = (vp * s.g).cwiseProduct(vp.conjugate()).rowwise().sum().real();
    const CMatrix<Real> e2 = eta_from_beams(kernel, beams);

    s.phi = hermitian_part(eye_d + precoder.adjoint() * e1 * precoder);
    s.phi_tilde = hermitian_part(eye_k + rm * e2 * rm);
    const CMatrix<Real> gamma = hermitian_part(e1 + rm_h.adjoint() * inverse_hpd(s.phi_tilde) * rm_h);
    const CMatrix<Real> gamma_tilde = hermitian_part(e2 + hp * inverse_hpd(s.phi) * hp.adjoint());

    const Real residual =
        std::max(detail::relative_change(gamma, s.gamma), detail::relative_change(gamma_tilde, s.gamma_tilde));
    s.gamma = gamma;
    s.gamma_tilde = gamma_tilde;

    const CMatrix<Real> g_new = inverse_hpd<Real>(eye_d + precoder.adjoint() * s.gamma * precoder);
    const CMatrix<Real> gt_new = inverse_hpd<Real>(eye_k + rm * s.gamma_tilde * rm);
    if (residual > previous && sweep > 1) {
      const Real beta = Real(options.damping);
      s.g = (Real(1) - beta) * s.g + beta * g_new;
      s.g_tilde = (Real(1) - beta) * s.g_tilde + beta * gt_new;
    } else {
      s.g = g_new;
      s.g_tilde = gt_new;
    }
    previous = residual;
    s.iterations_used = sweep;
    s.residual = residual;
    if (options.trace) options.trace(sweep, double(residual));
    if (!std::isfinite(double(residual))) throw numerical_error("solve_fixed_point: non-finite residual");
    if (residual <= Real(options.tol)) return s;
  }
  throw numerical_error("solve_fixed_point: no convergence after " + std::to_string(options.max_iter) +
                        " sweeps, last residual " + std::to_string(double(s.residual)));
}

/// logdet(I + Gamma P P^H) + logdet(Phit) - tr(eta(P G P^H) Rm Gt Rm).
template <typename Real>
Real de_rate_form1(const DEState<Real>& s, const UserCsi<Real>& user, const CMatrix<Real>& precoder,
                   const CMatrix<Real>& r) {
  const Eigen::Index d = precoder.cols();
  const CMatrix<Real> rm = inverse_sqrt_hpd(r);
  const CMatrix<Real> vp = user.kernel.dft->matrix().adjoint() * precoder;
  const RVector<Real> beams = (vp * s.g).cwiseProduct(vp.conjugate()).rowwise().sum().real();
  const CMatrix<Real> e2 = eta_from_beams(user.kernel, beams);
  const Real value = logdet_hpd<Real>(CMatrix<Real>::Identity(d, d) + precoder.adjoint() * s.gamma * precoder) +
                     logdet_hpd(s.phi_tilde) - std::real((e2 * rm * s.g_tilde * rm).trace());
  if (!std::isfinite(double(value))) throw numerical_error("de_rate_form1: non-finite rate");
  return std::max(value, Real(0));
}

/// logdet(I + Gammat R^{-1}) + logdet(Phi) - tr(P G P^H etat(Rm Gt Rm)).
template <typename Real>
Real de_rate_form2(const DEState<Real>& s, const UserCsi<Real>& user, const CMatrix<Real>& precoder,
                   const CMatrix<Real>& r) {
  const Eigen::Index mk = r.rows();
  const CMatrix<Real> rm = inverse_sqrt_hpd(r);
  const CMatrix<Real> e1 = eta_tilde(user.kernel, hermitian_part(rm * s.g_tilde * rm));
  const Real value = logdet_hpd<Real>(CMatrix<Real>::Identity(mk, mk) + rm * s.gamma_tilde * rm) +
                     logdet_hpd(s.phi) - std::real((s.g * precoder.adjoint() * e1 * precoder).trace());
  if (!std::isfinite(double(value))) throw numerical_error("de_rate_form2: non-finite rate");
  return std::max(value, Real(0));
}

/// sum_k w_k * de_rate_form1.
template <typename Real>
Real de_weighted_sum_rate(const std::vector<DEState<Real>>& states, const BlockCsi<Real>& csi,
                          const std::vector<CMatrix<Real>>& precoders, const std::vector<CMatrix<Real>>& covariances,
                          const std::vector<double>& weights) {
  Real total = 0;
  for (std::size_t k = 0; k < csi.num_users(); ++k) {
    if (weights.at(k) == 0) continue;
    total += Real(weights[k]) * de_rate_form1(states.at(k), csi.users[k], precoders.at(k), covariances.at(k));
  }
  return total;
}

/// Everything needed to evaluate the DE objective at one precoder set.
template <typename Real>
struct DEEvaluation {
  std::vector<CMatrix<Real>> covariances;
  std::vector<DEState<Real>> states;
  std::vector<Real> rates;
  Real objective = 0;
};

/// Computes R_k, the fixed points and the weighted DE sum-rate. `warm` may hold
/// the states of a previous evaluation.
template <typename Real>
DEEvaluation<Real> evaluate_de(const BlockCsi<Real>& csi, const std::vector<CMatrix<Real>>& precoders,
                               const std::vector<double>& weights, Real sigma2_z, const DEOptions& options = {},
                               const std::vector<DEState<Real>>* warm = nullptr) {
  DEEvaluation<Real> ev;
  std::vector<RVector<Real>> beam_powers;
  for (const auto& p : precoders) beam_powers.push_back(csi.dft->beam_powers(p));
  for (std::size_t k = 0; k < csi.num_users(); ++k) {
    ev.covariances.push_back(interference_covariance(csi, precoders, beam_powers, k, sigma2_z));
    const DEState<Real>* seed = (warm != nullptr && warm->size() == csi.num_users()) ? &(*warm)[k] : nullptr;
    ev.states.push_back(solve_fixed_point(csi.users[k], precoders[k], ev.covariances[k], options, seed));
    const Real rate = de_rate_form1(ev.states[k], csi.users[k], precoders[k], ev.covariances[k]);
    ev.rates.push_back(rate);
    ev.objective += Real(weights.at(k)) * rate;
  }
  return ev;
}

}  // namespace robprec
