// SPDX-License-Identifier: Apache-2.0
//
// Zero-mean beam-domain power allocation. With Hhat = 0 and P_k = V Pi_k J_k
// every operator output is diagonal in the U_k / V bases, so the whole
// iteration runs on vectors:
//
//   q_k       beam powers of user k (nonzero on its first d_k ordered beams)
//   r_k       = sigma2 + Omega_k sum_{l != k} q_l        R_k in the U_k basis
//   gammat_k  = Omega_k (q_k / (1 + gamma_k q_k))
//   gtilde_k  = 1 / (1 + gammat_k / r_k)
//   gamma_k   = Omega_k^T (gtilde_k / r_k)
//   lambdaA_k = Omega_k^T (1 / r_k),  lambdaC_k = lambdaA_k - gamma_k
//   f_k       = -w_k gamma_k^2 q_k / (1 + gamma_k q_k)
//   lambdaD   = sum_k w_k lambdaC_k
//   j_k      <- (w_k lambdaA_k + f_k) / (lambdaD + mu) * j_k

#pragma once

#include "robprec/mm_precoder.hpp"

#include <algorithm>
#include <numeric>

namespace robprec {

/// a_j = sum_i Omega_ij.
template <typename Real>
RVector<Real> beam_power_vector(const UserStatistics<Real>& stats) {
  return stats.omega.colwise().sum().transpose();
}

/// Beam indices sorted by descending a_j, ties by ascending index.
template <typename Real>
std::vector<int> beam_order(const UserStatistics<Real>& stats) {
  const RVector<Real> a = beam_power_vector(stats);
  std::vector<int> order(a.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return a(x) > a(y); });
  return order;
}

/// Per-user beam allocation. `order[k][j]` is the beam carried by column j and
/// `amplitude[k](j)` its real nonnegative gain, j < d_k.
template <typename Real>
struct BeamAllocation {
  std::vector<std::vector<int>> order;
  std::vector<RVector<Real>> amplitude;

  std::size_t num_users() const { return order.size(); }

  /// Beam-power vector q_k of length M_t.
  RVector<Real> beam_powers(std::size_t k, Eigen::Index num_tx) const {
    RVector<Real> q = RVector<Real>::Zero(num_tx);
    for (Eigen::Index j = 0; j < amplitude[k].size(); ++j) q(order[k][j]) = amplitude[k](j) * amplitude[k](j);
    return q;
  }

  Real total_power() const {
    Real acc = 0;
    for (const auto& a : amplitude) acc += a.squaredNorm();
    return acc;
  }

  /// J_k as an M_t x d_k matrix (diagonal support).
  RMatrix<Real> j_matrix(std::size_t k, Eigen::Index num_tx) const {
    const Eigen::Index d = amplitude[k].size();
    RMatrix<Real> j = RMatrix<Real>::Zero(num_tx, d);
    for (Eigen::Index c = 0; c < d; ++c) j(c, c) = amplitude[k](c);
    return j;
  }

  /// P_k = V Pi_k J_k.
  PrecoderSet<Real> precoders(const DftMatrix<Real>& dft) const {
    PrecoderSet<Real> out;
    for (std::size_t k = 0; k < order.size(); ++k) {
      CMatrix<Real> p(dft.size(), amplitude[k].size());
      for (Eigen::Index j = 0; j < amplitude[k].size(); ++j)
        p.col(j) = Complex<Real>(amplitude[k](j)) * dft.matrix().col(order[k][j]);
      out.push_back(std::move(p));
    }
    return out;
  }
};

/// Scalar DE quantities of one user at one allocation.
template <typename Real>
struct BeamState {
  RVector<Real> r, gamma, gamma_tilde, g_tilde;
  int iterations_used = 0;
  Real residual = 0;
};

template <typename Real>
struct BeamEvaluation {
  std::vector<BeamState<Real>> states;
  std::vector<Real> rates;
  Real objective = 0;
};

/// Per-user fixed point in diagonal form. Same initialization, residual and
/// damping rule as solve_fixed_point.
template <typename Real>
BeamState<Real> solve_beam_fixed_point(const RMatrix<Real>& omega, const RVector<Real>& q, const RVector<Real>& r,
                                       const DEOptions& options = {}, const BeamState<Real>* warm = nullptr) {
  BeamState<Real> s;
  s.r = r;
  const Eigen::Index mt = omega.cols();
  const Eigen::Index mk = omega.rows();
  // g holds 1/(1 + gamma q) on every beam; only beams with q > 0 matter.
  RVector<Real> g = RVector<Real>::Ones(mt);
  s.g_tilde = RVector<Real>::Ones(mk);
  if (warm != nullptr && warm->g_tilde.size() == mk && warm->gamma.size() == mt) {
    s.g_tilde = warm->g_tilde;
    g = (RVector<Real>::Ones(mt) + warm->gamma.cwiseProduct(q)).cwiseInverse();
  }
  s.gamma = RVector<Real>::Zero(mt);
  s.gamma_tilde = RVector<Real>::Zero(mk);
  Real previous = std::numeric_limits<Real>::infinity();
  auto rel = [](const RVector<Real>& a, const RVector<Real>& b) {
    const Real diff = (a - b).norm();
    return diff == Real(0) ? Real(0) : diff / std::max(a.norm(), b.norm());
  };
  for (int sweep = 1; sweep <= options.max_iter; ++sweep) {
    const RVector<Real> gamma = omega.transpose() * s.g_tilde.cwiseQuotient(r);
    const RVector<Real> gamma_tilde = omega * q.cwiseProduct(g);
    const Real residual = std::max(rel(gamma, s.gamma), rel(gamma_tilde, s.gamma_tilde));
    s.gamma = gamma;
    s.gamma_tilde = gamma_tilde;
    const RVector<Real> g_new = (RVector<Real>::Ones(mt) + s.gamma.cwiseProduct(q)).cwiseInverse();
    const RVector<Real> gt_new = (RVector<Real>::Ones(mk) + s.gamma_tilde.cwiseQuotient(r)).cwiseInverse();
    if (residual > previous && sweep > 1) {
      const Real beta = Real(options.damping);
      g = (Real(1) - beta) * g + beta * g_new;
      s.g_tilde = (Real(1) - beta) * s.g_tilde + beta * gt_new;
    } else {
      g = g_new;
      s.g_tilde = gt_new;
    }
    previous = residual;
    s.iterations_used = sweep;
    s.residual = residual;
    if (options.trace) options.trace(sweep, double(residual));
    if (!std::isfinite(double(residual))) throw numerical_error("solve_beam_fixed_point: non-finite residual");
    if (residual <= Real(options.tol)) return s;
  }
  throw numerical_error("solve_beam_fixed_point: no convergence after " + std::to_string(options.max_iter) +
                        " sweeps, last residual " + std::to_string(double(s.residual)));
}

/// sum log(1 + gamma q) + sum log(1 + gammat / r) - sum gammat gtilde / r.
template <typename Real>
Real beam_de_rate(const BeamState<Real>& s, const RVector<Real>& q) {
  Real value = (RVector<Real>::Ones(q.size()) + s.gamma.cwiseProduct(q)).array().log().sum();
  const RVector<Real> ratio = s.gamma_tilde.cwiseQuotient(s.r);
  value += (RVector<Real>::Ones(ratio.size()) + ratio).array().log().sum();
  value -= ratio.cwiseProduct(s.g_tilde).sum();
  if (!std::isfinite(double(value))) throw numerical_error("beam_de_rate: non-finite rate");
  return std::max(value, Real(0));
}

template <typename Real>
BeamEvaluation<Real> evaluate_beam_de(const std::vector<UserStatistics<Real>>& stats, const BeamAllocation<Real>& alloc,
                                      const std::vector<double>& weights, Real sigma2_z, const DEOptions& options = {},
                                      const std::vector<BeamState<Real>>* warm = nullptr) {
  if (!(sigma2_z > Real(0))) throw invalid_argument("evaluate_beam_de: sigma2_z must be positive");
  const Eigen::Index mt = stats.front().tx();
  std::vector<RVector<Real>> q;
  RVector<Real> all = RVector<Real>::Zero(mt);
  for (std::size_t k = 0; k < stats.size(); ++k) {
    q.push_back(alloc.beam_powers(k, mt));
    all += q.back();
  }
  BeamEvaluation<Real> ev;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const RVector<Real> r = RVector<Real>::Constant(stats[k].rx(), sigma2_z) + stats[k].omega * (all - q[k]);
    const BeamState<Real>* seed = (warm != nullptr && warm->size() == stats.size()) ? &(*warm)[k] : nullptr;
    ev.states.push_back(solve_beam_fixed_point(stats[k].omega, q[k], r, options, seed));
    ev.rates.push_back(beam_de_rate(ev.states.back(), q[k]));
    ev.objective += Real(weights.at(k)) * ev.rates.back();
  }
  return ev;
}

/// Per-beam surrogate coefficients of one iterate.
template <typename Real>
struct BeamSurrogate {
  std::vector<RVector<Real>> numerator;  // w_k lambdaA_k + f_k, per user over all beams
  RVector<Real> lambda_d;                // shared over beams
};

template <typename Real>
BeamSurrogate<Real> beam_surrogate(const std::vector<UserStatistics<Real>>& stats, const BeamAllocation<Real>& alloc,
                                   const BeamEvaluation<Real>& ev, const std::vector<double>& weights) {
  const Eigen::Index mt = stats.front().tx();
  BeamSurrogate<Real> out;
  out.lambda_d = RVector<Real>::Zero(mt);
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const auto& s = ev.states[k];
    const RVector<Real> q = alloc.beam_powers(k, mt);
    const RVector<Real> lambda_a = stats[k].omega.transpose() * s.r.cwiseInverse();
    const RVector<Real> lambda_c = (lambda_a - s.gamma).cwiseMax(Real(0));
    const RVector<Real> gq = s.gamma.cwiseProduct(q);
    const RVector<Real> f =
        -Real(weights[k]) * s.gamma.cwiseProduct(gq).cwiseQuotient(RVector<Real>::Ones(mt) + gq);
    out.numerator.push_back(Real(weights[k]) * lambda_a + f);
    out.lambda_d += Real(weights[k]) * lambda_c;
  }
  return out;
}

struct BeamReport {
  MMReport mm;
  double kkt_residual = 0;
};

template <typename Real>
struct BeamResult {
  BeamAllocation<Real> allocation;
  BeamReport report;
  BeamEvaluation<Real> final_evaluation;
};

/// ||(w A + F) J - (D + mu) J||_F / ||J||_F over all users at a given mu.
template <typename Real>
Real beam_kkt_residual(const BeamAllocation<Real>& alloc, const BeamSurrogate<Real>& sur, Real mu) {
  Real num = 0;
  Real den = 0;
  for (std::size_t k = 0; k < alloc.num_users(); ++k) {
    for (Eigen::Index j = 0; j < alloc.amplitude[k].size(); ++j) {
      const int b = alloc.order[k][j];
      const Real a = alloc.amplitude[k](j);
      const Real e = (sur.numerator[k](b) - sur.lambda_d(b) - mu) * a;
      num += e * e;
      den += a * a;
    }
  }
  return den > Real(0) ? std::sqrt(num / den) : Real(0);
}

/// Elementwise multiplier search and update.
template <typename Real>
std::pair<BeamAllocation<Real>, Real> beam_update(const BeamAllocation<Real>& alloc, const BeamSurrogate<Real>& sur,
                                                  Real budget, const MMOptions& options) {
  auto power_at = [&](Real mu) {
    Real acc = 0;
    for (std::size_t k = 0; k < alloc.num_users(); ++k) {
      for (Eigen::Index j = 0; j < alloc.amplitude[k].size(); ++j) {
        const int b = alloc.order[k][j];
        const Real a = alloc.amplitude[k](j);
        if (a == Real(0)) continue;
        const Real den = sur.lambda_d(b) + mu;
        if (den <= Real(0)) return std::numeric_limits<Real>::infinity();
        const Real v = sur.numerator[k](b) * a / den;
        acc += v * v;
      }
    }
    return acc;
  };
  const Real mu = bisect_multiplier<Real>(power_at, budget, Real(options.tol_power), options.max_halvings);
  BeamAllocation<Real> next = alloc;
  for (std::size_t k = 0; k < alloc.num_users(); ++k) {
    for (Eigen::Index j = 0; j < alloc.amplitude[k].size(); ++j) {
      const int b = alloc.order[k][j];
      const Real a = alloc.amplitude[k](j);
      const Real den = sur.lambda_d(b) + mu;
      next.amplitude[k](j) = (a == Real(0) || den <= Real(0)) ? Real(0) : std::abs(sur.numerator[k](b) * a / den);
    }
  }
  return {std::move(next), mu};
}

/// Initial allocation: unit gain on each user's first d_k ordered beams,
/// scaled to the power budget.
template <typename Real>
BeamAllocation<Real> initial_beam_allocation(const std::vector<UserStatistics<Real>>& stats, const SystemConfig& cfg) {
  BeamAllocation<Real> alloc;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    alloc.order.push_back(beam_order(stats[k]));
    alloc.amplitude.push_back(RVector<Real>::Ones(cfg.streams.at(k)));
  }
  const Real scale = std::sqrt(Real(cfg.total_power) / alloc.total_power());
  for (auto& a : alloc.amplitude) a *= scale;
  return alloc;
}

/// Beam-domain MM on the a priori statistics. Power lives on the first d_k
/// beams of each user's descending order.
template <typename Real>
BeamResult<Real> algorithm3(const std::vector<UserStatistics<Real>>& stats, const SystemConfig& cfg,
                            const MMOptions& options = {}, const BeamAllocation<Real>* init = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  if (stats.size() != std::size_t(cfg.num_users)) throw invalid_argument("algorithm3: user count mismatch");
  for (std::size_t k = 0; k < stats.size(); ++k)
    if (cfg.streams.at(k) > stats[k].tx()) throw invalid_argument("algorithm3: more streams than beams");
  const Real sigma2 = Real(cfg.sigma2_z);
  BeamResult<Real> out;
  out.allocation = init != nullptr ? *init : initial_beam_allocation(stats, cfg);
  BeamEvaluation<Real> ev = evaluate_beam_de(stats, out.allocation, cfg.weights, sigma2, options.de);
  out.report.mm.objective.push_back(double(ev.objective));
  Real mu = 0;
  for (int it = 0; it < options.iterations; ++it) {
    const BeamSurrogate<Real> sur = beam_surrogate(stats, out.allocation, ev, cfg.weights);
    try {
      auto [next, m] = beam_update(out.allocation, sur, Real(cfg.total_power), options);
      out.allocation = std::move(next);
      mu = m;
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " (MM iteration " + std::to_string(it + 1) + ")");
    }
    ev = evaluate_beam_de(stats, out.allocation, cfg.weights, sigma2, options.de, &ev.states);
    auto& rep = out.report.mm;
    rep.objective.push_back(double(ev.objective));
    rep.mu.push_back(double(mu));
    rep.power.push_back(double(out.allocation.total_power()));
    rep.iterations = it + 1;
    const double before = rep.objective[rep.objective.size() - 2];
    const double after = rep.objective.back();
    if (options.early_exit_rel > 0 && std::abs(after - before) < options.early_exit_rel * (1.0 + std::abs(before)))
      break;
  }
  // Stationarity is measured at the final iterate with its own multiplier.
  const BeamSurrogate<Real> sur = beam_surrogate(stats, out.allocation, ev, cfg.weights);
  out.report.kkt_residual = double(beam_kkt_residual(out.allocation, sur, mu));
  out.final_evaluation = std::move(ev);
  out.report.mm.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

struct BeamStructureReport {
  bool aligned = false;
  double off_structure = 0;  // largest fraction of squared mass off the beam structure
};

/// Beam alignment of each P_k: the beam-domain Gram V^H P P^H V must be
/// diagonal, i.e. the column space of P_k is spanned by DFT columns. The
/// reported mass is ||offdiag||_F^2 / ||Gram||_F^2, the worst over users.
template <typename Real>
BeamStructureReport verify_beam_structure(const PrecoderSet<Real>& precoders, const DftMatrix<Real>& dft, double tol) {
  BeamStructureReport rep;
  for (const auto& p : precoders) {
    const CMatrix<Real> vp = dft.matrix().adjoint() * p;
    const CMatrix<Real> gram = vp * vp.adjoint();
    const Real total = gram.squaredNorm();
    if (total == Real(0)) continue;
    const Real diag = gram.diagonal().squaredNorm();
    rep.off_structure = std::max(rep.off_structure, double(std::max(Real(0), total - diag) / total));
  }
  rep.aligned = rep.off_structure <= tol;
  return rep;
}

/// Column-wise variant: every column of V^H P_k holds at least (1 - tol) of its
/// squared norm in one entry. Stricter than the Gram test because it also
/// fixes the right rotation of P_k.
template <typename Real>
BeamStructureReport verify_beam_columns(const PrecoderSet<Real>& precoders, const DftMatrix<Real>& dft, double tol) {
  BeamStructureReport rep;
  for (const auto& p : precoders) {
    const CMatrix<Real> vp = dft.matrix().adjoint() * p;
    for (Eigen::Index c = 0; c < vp.cols(); ++c) {
      const Real total = vp.col(c).squaredNorm();
      if (total == Real(0)) continue;
      const Real peak = vp.col(c).cwiseAbs2().maxCoeff();
      rep.off_structure = std::max(rep.off_structure, double((total - peak) / total));
    }
  }
  rep.aligned = rep.off_structure <= tol;
  return rep;
}

}  // namespace robprec
