// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit tests and the acceptance runner.

#pragma once

#include "robprec/beam_domain.hpp"
#include "robprec/baselines.hpp"
#include "robprec/posterior.hpp"

#include <cmath>
#include <vector>

namespace robprec::testing {

inline CMatrixd random_hermitian(Eigen::Index n, Rng& rng) {
  const CMatrixd g = complex_gaussian<double>(n, n, rng);
  return hermitian_part(g + g.adjoint());
}

inline CMatrixd random_psd(Eigen::Index n, Rng& rng) {
  const CMatrixd g = complex_gaussian<double>(n, n, rng);
  return hermitian_part(g * g.adjoint());
}

/// Random kernel with a fully populated nonnegative profile.
inline OperatorKernel<double> random_kernel(Eigen::Index mk, Eigen::Index mt, Rng& rng, DftPtr<double> dft = nullptr) {
  if (!dft) dft = make_dft<double>(mt);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  RMatrixd s(mk, mt);
  for (Eigen::Index j = 0; j < mt; ++j)
    for (Eigen::Index i = 0; i < mk; ++i) s(i, j) = u(rng);
  return {random_unitary<double>(mk, rng), s, dft};
}

// Row-major vec(H~) covariance: (U kron conj(V)) diag(vec S) (U kron conj(V))^H.
inline CMatrixd vec_covariance(const OperatorKernel<double>& k) {
  const Eigen::Index mk = k.rx(), mt = k.tx();
  CMatrixd t(mk * mt, mk * mt);
  for (Eigen::Index i = 0; i < mk; ++i)
    for (Eigen::Index a = 0; a < mk; ++a) t.block(i * mt, a * mt, mt, mt) = k.U(i, a) * k.dft->matrix().conjugate();
  RVectord s(mk * mt);
  for (Eigen::Index a = 0; a < mk; ++a)
    for (Eigen::Index b = 0; b < mt; ++b) s(a * mt + b) = k.S(a, b);
  return t * s.cast<std::complex<double>>().asDiagonal() * t.adjoint();
}

// E[H C~ H^H]_{ii'} = sum_{jj'} C~_{jj'} E[H_ij conj(H_i'j')].
inline CMatrixd eta_oracle(const OperatorKernel<double>& k, const CMatrixd& ct) {
  const CMatrixd cov = vec_covariance(k);
  const Eigen::Index mk = k.rx(), mt = k.tx();
  CMatrixd out = CMatrixd::Zero(mk, mk);
  for (Eigen::Index i = 0; i < mk; ++i)
    for (Eigen::Index ip = 0; ip < mk; ++ip)
      for (Eigen::Index j = 0; j < mt; ++j)
        for (Eigen::Index jp = 0; jp < mt; ++jp) out(i, ip) += ct(j, jp) * cov(i * mt + j, ip * mt + jp);
  return out;
}

// E[H^H C H]_{jj'} = sum_{ii'} C_{ii'} E[conj(H_ij) H_i'j'].
inline CMatrixd eta_tilde_oracle(const OperatorKernel<double>& k, const CMatrixd& c) {
  const CMatrixd cov = vec_covariance(k);
  const Eigen::Index mk = k.rx(), mt = k.tx();
  CMatrixd out = CMatrixd::Zero(mt, mt);
  for (Eigen::Index j = 0; j < mt; ++j)
    for (Eigen::Index jp = 0; jp < mt; ++jp)
      for (Eigen::Index i = 0; i < mk; ++i)
        for (Eigen::Index ip = 0; ip < mk; ++ip) out(j, jp) += c(i, ip) * cov(ip * mt + jp, i * mt + j);
  return out;
}

/// Posterior of one slot drawn from the synthetic generator.
struct Instance {
  SystemConfig cfg;
  std::vector<UserStatistics<double>> stats;
  DftPtr<double> dft;
  TrueChannelSlot<double> slot;
  PosteriorModel<double> posterior;
};

inline Instance make_instance(int mt, int users, int rx, double snr_db, const std::vector<double>& alpha,
                              std::uint64_t seed, int band_width = 6) {
  Instance in;
  in.cfg = SystemConfig::uniform(mt, users, rx).at_snr(snr_db);
  in.cfg.seed = seed;
  GeneratorProfile prof = GeneratorProfile::uniform(users, std::min(band_width, mt), 0.9);
  for (int k = 0; k < users; ++k) prof.alpha[k] = alpha[std::size_t(k) % alpha.size()];
  Rng rng = derive_rng(seed, {11});
  in.stats = generate_synthetic_stats<double>(in.cfg, prof, rng);
  in.dft = make_dft<double>(mt);
  in.slot = evolve_slot(in.stats, *in.dft, in.cfg.blocks_per_slot, rng);
  const auto pilots = build_orthogonal_pilots<double>(in.cfg);
  const CMatrixd y = simulate_uplink_observation(in.slot, pilots, in.cfg.sigma2_bs, rng);
  in.posterior = build_posterior(y, pilots, in.stats, in.dft, in.cfg.sigma2_bs, in.cfg.blocks_per_slot);
  return in;
}

/// Deterministic-channel CSI (Xi^2 = 0) from a list of channels.
inline BlockCsi<double> exact_csi(const std::vector<CMatrixd>& h, DftPtr<double> dft) { return perfect_csi(h, dft); }

/// Plain Monte Carlo average of logdet(I + R^{-1} H P P^H H^H) over posterior draws.
inline double mc_user_rate(const UserCsi<double>& user, const CMatrixd& p, const CMatrixd& r, int draws, Rng& rng) {
  const CMatrixd r_inv = r.inverse();
  const Eigen::Index mk = r.rows();
  double acc = 0;
  for (int s = 0; s < draws; ++s) {
    const CMatrixd hp = sample_posterior(user, rng) * p;
    const CMatrixd m = CMatrixd::Identity(mk, mk) + r_inv * hp * hp.adjoint();
    acc += std::log(std::abs(m.determinant()));
  }
  return acc / draws;
}

/// Water-filling sum rate of a single user on a fixed channel.
inline double waterfilling_rate(const CMatrixd& h, double power, double sigma2) {
  Eigen::JacobiSVD<CMatrixd> svd(h);
  std::vector<double> g;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    const double s = svd.singularValues()(i);
    if (s > 0) g.push_back(s * s / sigma2);
  }
  std::sort(g.begin(), g.end(), std::greater<>());
  for (std::size_t active = g.size(); active >= 1; --active) {
    double inv = 0;
    for (std::size_t i = 0; i < active; ++i) inv += 1.0 / g[i];
    const double level = (power + inv) / double(active);
    if (level - 1.0 / g[active - 1] > 0) {
      double rate = 0;
      for (std::size_t i = 0; i < active; ++i) rate += std::log(level * g[i]);
      return rate;
    }
  }
  return 0;
}

}  // namespace robprec::testing
