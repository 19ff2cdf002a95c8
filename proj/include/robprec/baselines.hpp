// SPDX-License-Identifier: Apache-2.0
//
// Comparison precoders on a fixed channel estimate: RZF, SLNR, iterative WMMSE
// and an RZF with an error-covariance load.

#pragma once

#include "robprec/mm_precoder.hpp"
#include "robprec/posterior.hpp"

#include <Eigen/Eigenvalues>

namespace robprec {

/// Channels the baseline treats as exact, plus the system constants it needs.
template <typename Real>
struct BaselineInput {
  std::vector<CMatrix<Real>> channels;  // H_k, M_k x M_t
  std::vector<int> streams;             // d_k
  Real sigma2_z = 1;
  Real total_power = 1;

  Eigen::Index tx() const { return channels.front().cols(); }
  std::size_t num_users() const { return channels.size(); }
};

template <typename Real>
BaselineInput<Real> baseline_input(const std::vector<CMatrix<Real>>& channels, const SystemConfig& cfg) {
  if (channels.size() != std::size_t(cfg.num_users)) throw invalid_argument("baseline_input: user count mismatch");
  return {channels, cfg.streams, Real(cfg.sigma2_z), Real(cfg.total_power)};
}

namespace detail {

template <typename Real>
CMatrix<Real> stack_rows(const std::vector<CMatrix<Real>>& blocks) {
  Eigen::Index rows = 0;
  for (const auto& b : blocks) rows += b.rows();
  CMatrix<Real> out(rows, blocks.front().cols());
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return out;
}

/// Hall^H (Hall Hall^H + load)^{-1}, split per user and scaled to the budget.
template <typename Real>
PrecoderSet<Real> regularized_inverse(const std::vector<CMatrix<Real>>& channels, const CMatrix<Real>& load,
                                      Real budget) {
  const CMatrix<Real> h = stack_rows(channels);
  const CMatrix<Real> gram = hermitian_part(h * h.adjoint() + load);
  const CMatrix<Real> p_all = h.adjoint() * inverse_hpd(gram);
  PrecoderSet<Real> out;
  Eigen::Index at = 0;
  for (const auto& c : channels) {
    out.push_back(p_all.middleCols(at, c.rows()));
    at += c.rows();
  }
  if (total_power(out) <= Real(0)) throw invalid_argument("regularized inverse: all channels are zero");
  normalize_power(out, budget);
  return out;
}

template <typename Real>
void require_full_streams(const BaselineInput<Real>& in, const char* who) {
  for (std::size_t k = 0; k < in.num_users(); ++k)
    if (in.streams.at(k) != in.channels[k].rows())
      throw invalid_argument(std::string(who) + ": needs d_k = M_k for every user");
}

}  // namespace detail

/// P = xi Hall^H (Hall Hall^H + (K sigma2 / P) I)^{-1}.
template <typename Real>
PrecoderSet<Real> rzf(const BaselineInput<Real>& in) {
  detail::require_full_streams(in, "rzf");
  Eigen::Index rows = 0;
  for (const auto& c : in.channels) rows += c.rows();
  const Real reg = Real(in.num_users()) * in.sigma2_z / in.total_power;
  return detail::regularized_inverse<Real>(in.channels, reg * CMatrix<Real>::Identity(rows, rows), in.total_power);
}

/// Top-d_k generalized eigenvectors of (H_k^H H_k, sigma2 M_k K / P I + sum_{l != k} H_l^H H_l),
/// each user at power P / K split evenly over its columns.
template <typename Real>
PrecoderSet<Real> slnr(const BaselineInput<Real>& in) {
  const Eigen::Index mt = in.tx();
  const Real users = Real(in.num_users());
  CMatrix<Real> all = CMatrix<Real>::Zero(mt, mt);
  for (const auto& h : in.channels) all.noalias() += h.adjoint() * h;
  PrecoderSet<Real> out;
  for (std::size_t k = 0; k < in.num_users(); ++k) {
    const auto& h = in.channels[k];
    const int d = in.streams.at(k);
    if (d < 1 || d > std::min<Eigen::Index>(h.rows(), mt)) throw invalid_argument("slnr: invalid stream count");
    const CMatrix<Real> signal = hermitian_part(h.adjoint() * h);
    const Real load = in.sigma2_z * Real(h.rows()) * users / in.total_power;
    const CMatrix<Real> leak =
        hermitian_part(all - h.adjoint() * h + load * CMatrix<Real>::Identity(mt, mt));
    Eigen::GeneralizedSelfAdjointEigenSolver<CMatrix<Real>> es(signal, leak);
    if (es.info() != Eigen::Success) throw numerical_error("slnr: generalized eigensolver failed");
    // Eigenvalues come out ascending.
    CMatrix<Real> p(mt, d);
    for (int j = 0; j < d; ++j) {
      CVector<Real> v = es.eigenvectors().col(mt - 1 - j);
      p.col(j) = v / v.norm();
    }
    p *= std::sqrt(in.total_power / (users * Real(d)));
    out.push_back(std::move(p));
  }
  return out;
}

/// sum_k w_k logdet(I + R_k^{-1} H_k P_k P_k^H H_k^H) with exact channels.
template <typename Real>
Real exact_weighted_sum_rate(const std::vector<CMatrix<Real>>& channels, const PrecoderSet<Real>& precoders,
                             const std::vector<double>& weights, Real sigma2_z) {
  Real total = 0;
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const auto& h = channels[k];
    CMatrix<Real> r = sigma2_z * CMatrix<Real>::Identity(h.rows(), h.rows());
    for (std::size_t l = 0; l < channels.size(); ++l) {
      if (l == k) continue;
      const CMatrix<Real> hp = h * precoders[l];
      r.noalias() += hp * hp.adjoint();
    }
    const CMatrix<Real> hp = h * precoders[k];
    const CMatrix<Real> full = hermitian_part(r + hp * hp.adjoint());
    total += Real(weights.at(k)) * (logdet_hpd(full) - logdet_hpd(hermitian_part(r)));
  }
  return total;
}

struct WmmseReport {
  std::vector<double> sum_rate;  // at iterate 0, 1, ...
  std::vector<double> mu;
  std::vector<double> power;
  int iterations = 0;
};

template <typename Real>
struct WmmseResult {
  PrecoderSet<Real> precoders;
  WmmseReport report;
};

/// One receiver / weight / precoder sweep:
///   G_k = (R_k + H_k P_k P_k^H H_k^H)^{-1} H_k P_k
///   W_k = (I - P_k^H H_k^H G_k)^{-1}
///   P_k = (sum_l w_l H_l^H G_l W_l G_l^H H_l + mu I)^{-1} w_k H_k^H G_k W_k
template <typename Real>
MuResult<Real> wmmse_step(const BaselineInput<Real>& in, const PrecoderSet<Real>& precoders,
                          const std::vector<double>& weights, const MMOptions& options = {}) {
  const Eigen::Index mt = in.tx();
  const std::size_t users = in.num_users();
  CMatrix<Real> shaping = CMatrix<Real>::Zero(mt, mt);
  std::vector<CMatrix<Real>> rhs;
  for (std::size_t k = 0; k < users; ++k) {
    const auto& h = in.channels[k];
    CMatrix<Real> r_full = in.sigma2_z * CMatrix<Real>::Identity(h.rows(), h.rows());
    for (std::size_t l = 0; l < users; ++l) {
      const CMatrix<Real> hp = h * precoders[l];
      r_full.noalias() += hp * hp.adjoint();
    }
    const CMatrix<Real> hp = h * precoders[k];
    const CMatrix<Real> g = inverse_hpd(hermitian_part(r_full)) * hp;
    const Eigen::Index d = precoders[k].cols();
    const CMatrix<Real> e = hermitian_part(CMatrix<Real>::Identity(d, d) - hp.adjoint() * g);
    const CMatrix<Real> w = inverse_hpd(e);
    const CMatrix<Real> hg = h.adjoint() * g;
    shaping.noalias() += Real(weights.at(k)) * (hg * w * hg.adjoint());
    rhs.push_back(Real(weights[k]) * (hg * w));
  }
  const std::vector<CMatrix<Real>> shapes{hermitian_part(shaping)};
  return mu_bisection(shapes, std::vector<std::size_t>(users, 0), rhs, in.total_power, Real(options.tol_power),
                      options.max_halvings);
}

template <typename Real>
WmmseResult<Real> wmmse(const BaselineInput<Real>& in, const std::vector<double>& weights, const PrecoderSet<Real>& init,
                        const MMOptions& options = {}) {
  WmmseResult<Real> out;
  out.precoders = init;
  out.report.sum_rate.push_back(double(exact_weighted_sum_rate(in.channels, out.precoders, weights, in.sigma2_z)));
  for (int it = 0; it < options.iterations; ++it) {
    MuResult<Real> upd = wmmse_step(in, out.precoders, weights, options);
    out.precoders = std::move(upd.precoders);
    out.report.sum_rate.push_back(double(exact_weighted_sum_rate(in.channels, out.precoders, weights, in.sigma2_z)));
    out.report.mu.push_back(double(upd.mu));
    out.report.power.push_back(double(total_power(out.precoders)));
    out.report.iterations = it + 1;
    const double before = out.report.sum_rate[out.report.sum_rate.size() - 2];
    const double after = out.report.sum_rate.back();
    if (options.early_exit_rel > 0 && std::abs(after - before) < options.early_exit_rel * (1.0 + std::abs(before)))
      break;
  }
  return out;
}

/// WMMSE started from the RZF solution.
template <typename Real>
WmmseResult<Real> wmmse(const BaselineInput<Real>& in, const std::vector<double>& weights,
                        const MMOptions& options = {}) {
  return wmmse(in, weights, rzf(in), options);
}

inline constexpr const char* kRobustRzfLabel = "robust-rzf (conventional)";

/// RZF on the posterior mean with the error covariance E[Ht_k Ht_k^H] = eta_k(I)
/// added to user k's diagonal block of the Gram, scaled by `load_scale`. When
/// every mean is zero the deterministic profile U_k (sqrt(S_k)) V^H stands in
/// for the mean so that the output still carries the full budget.
template <typename Real>
PrecoderSet<Real> robust_rzf(const BlockCsi<Real>& csi, const SystemConfig& cfg, double load_scale = 1.0) {
  if (csi.num_users() != std::size_t(cfg.num_users)) throw invalid_argument("robust_rzf: user count mismatch");
  const Eigen::Index mt = csi.tx();
  std::vector<CMatrix<Real>> means;
  Real mean_energy = 0;
  for (const auto& u : csi.users) {
    means.push_back(u.hhat);
    mean_energy += u.hhat.squaredNorm();
  }
  if (mean_energy == Real(0)) {
    for (std::size_t k = 0; k < csi.num_users(); ++k) {
      const auto& kern = csi.users[k].kernel;
      const CMatrix<Real> root = kern.S.array().sqrt().matrix().template cast<Complex<Real>>();
      means[k] = kern.U * root * kern.dft->matrix().adjoint();
    }
  }
  BaselineInput<Real> in = baseline_input(means, cfg);
  detail::require_full_streams(in, "robust_rzf");
  Eigen::Index rows = 0;
  for (const auto& m : means) rows += m.rows();
  const Real reg = Real(cfg.num_users) * Real(cfg.sigma2_z) / Real(cfg.total_power);
  CMatrix<Real> load = reg * CMatrix<Real>::Identity(rows, rows);
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < csi.num_users(); ++k) {
    const Eigen::Index mk = means[k].rows();
    load.block(at, at, mk, mk) += Real(load_scale) * eta<Real>(csi.users[k].kernel, CMatrix<Real>::Identity(mt, mt));
    at += mk;
  }
  return detail::regularized_inverse<Real>(means, load, Real(cfg.total_power));
}

}  // namespace robprec
