// SPDX-License-Identifier: Apache-2.0
//
// Minorize-maximize precoder updates on the deterministic-equivalent surrogate.
//
//   A_k  = Hhat^H R^{-1} Hhat + etat(R^{-1})
//   B_k  = A_k - (I + Gamma P P^H)^{-1} Gamma
//   C_k  = Hhat^H (R^{-1} - (R + Gammat)^{-1}) Hhat + etat(R^{-1} - (R + Gammat)^{-1})
//   D_k  = w_k B_k + sum_{l != k} w_l C_l
//   F_k  = w_k (C_k - B_k)
//
// g1 update: P_k <- (D_k + mu I)^{-1} w_k A_k P_k
// g2 update: P_k <- (D + mu I)^{-1} (w_k A_k + F_k) P_k,  D = sum_k w_k C_k

#pragma once

#include "robprec/config.hpp"
#include "robprec/det_equiv.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

namespace robprec {

template <typename Real>
using PrecoderSet = std::vector<CMatrix<Real>>;

template <typename Real>
Real total_power(const PrecoderSet<Real>& precoders) {
  Real acc = 0;
  for (const auto& p : precoders) acc += p.squaredNorm();
  return acc;
}

/// Scales the set so that its total power equals `budget` (zero stays zero).
template <typename Real>
void normalize_power(PrecoderSet<Real>& precoders, Real budget) {
  const Real now = total_power(precoders);
  if (now <= Real(0)) return;
  const Real scale = std::sqrt(budget / now);
  for (auto& p : precoders) p *= scale;
}

/// i.i.d. complex Gaussian precoders scaled to meet the budget exactly.
template <typename Real>
PrecoderSet<Real> random_precoders(const SystemConfig& cfg, Rng& rng) {
  PrecoderSet<Real> out;
  for (int k = 0; k < cfg.num_users; ++k) out.push_back(complex_gaussian<Real>(cfg.num_tx, cfg.streams[k], rng));
  normalize_power(out, Real(cfg.total_power));
  return out;
}

struct MMReport {
  std::vector<double> objective;  // DE objective at iterate 0, 1, ...
  std::vector<double> mu;         // multiplier of each update
  std::vector<double> power;      // total power after each update
  int iterations = 0;
  double wall_seconds = 0;
};

template <typename Real>
struct MMResult {
  PrecoderSet<Real> precoders;
  MMReport report;
  DEEvaluation<Real> final_evaluation;
};

struct MMOptions {
  int iterations = 30;
  double early_exit_rel = 1e-8;  // <= 0 disables the early exit
  double tol_power = 1e-6;
  int max_halvings = 60;
  DEOptions de;
};

// ---------------------------------------------------------------------------
// Surrogate matrices

template <typename Real>
CMatrix<Real> compute_A(const UserCsi<Real>& user, const CMatrix<Real>& r) {
  return expected_gram(user, inverse_hpd(r));
}

/// Inversion-lemma form: A - Gamma + Gamma P (I + P^H Gamma P)^{-1} P^H Gamma.
template <typename Real>
CMatrix<Real> compute_B_bar(const UserCsi<Real>& user, const DEState<Real>& s, const CMatrix<Real>& r,
                            const CMatrix<Real>& precoder) {
  const Eigen::Index d = precoder.cols();
  const CMatrix<Real> gp = s.gamma * precoder;
  const CMatrix<Real> inner = inverse_hpd<Real>(CMatrix<Real>::Identity(d, d) + precoder.adjoint() * gp);
  return hermitian_part(compute_A(user, r) - s.gamma + gp * inner * gp.adjoint());
}

/// Direct form A - (I + Gamma P P^H)^{-1} Gamma, O(M_t^3).
template <typename Real>
CMatrix<Real> compute_B_bar_direct(const UserCsi<Real>& user, const DEState<Real>& s, const CMatrix<Real>& r,
                                   const CMatrix<Real>& precoder) {
  const Eigen::Index mt = precoder.rows();
  const CMatrix<Real> m = CMatrix<Real>::Identity(mt, mt) + s.gamma * precoder * precoder.adjoint();
  return hermitian_part(compute_A(user, r) - m.partialPivLu().solve(s.gamma));
}

template <typename Real>
CMatrix<Real> compute_C_bar(const UserCsi<Real>& user, const DEState<Real>& s, const CMatrix<Real>& r) {
  const CMatrix<Real> diff = hermitian_part(inverse_hpd(r) - inverse_hpd<Real>(r + s.gamma_tilde));
  return expected_gram(user, diff);
}

template <typename Real>
CMatrix<Real> compute_D_bar(const std::vector<CMatrix<Real>>& c_bar, const CMatrix<Real>& b_bar_k,
                            const std::vector<double>& weights, std::size_t k) {
  CMatrix<Real> d = Real(weights.at(k)) * b_bar_k;
  for (std::size_t l = 0; l < c_bar.size(); ++l) {
    if (l == k) continue;
    d += Real(weights.at(l)) * c_bar[l];
  }
  return hermitian_part(d);
}

template <typename Real>
CMatrix<Real> compute_F_bar(const CMatrix<Real>& b_bar, const CMatrix<Real>& c_bar, double weight) {
  return hermitian_part(Real(weight) * (c_bar - b_bar));
}

// ---------------------------------------------------------------------------
// Sum-power multiplier

/// Smallest multiplier mu >= 0 with power(mu) <= budget for a nonincreasing
/// power function. mu = 0 is returned when it is already feasible; otherwise the
/// bracket grows by doubling from 1 and is halved until it collapses to machine
/// precision (at most `max_halvings` times). The feasible end is returned and
/// its power must lie in [budget (1 - tol), budget].
//
// Stopping at the first point inside the tolerance band leaves a power deficit
// of up to tol * budget, which near convergence costs more objective than the
// MM ascent slack; the bisection is cheap, so it runs to full precision.
template <typename Real, typename PowerFn>
Real bisect_multiplier(PowerFn&& power_at, Real budget, Real tol_power, int max_halvings) {
  if (!(budget > Real(0))) throw invalid_argument("bisection: budget must be positive");
  if (power_at(Real(0)) <= budget) return Real(0);
  Real hi = 1;
  while (power_at(hi) >= budget) {
    hi *= Real(2);
    if (hi > std::ldexp(Real(1), 60)) throw numerical_error("bisection bracket failure");
  }
  Real lo = hi > Real(1) ? hi / Real(2) : Real(0);
  const Real eps = std::numeric_limits<Real>::epsilon();
  for (int it = 0; it < max_halvings && hi - lo > Real(4) * eps * hi; ++it) {
    const Real mid = Real(0.5) * (lo + hi);
    if (power_at(mid) > budget) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const Real p = power_at(hi);
  if (p < budget * (Real(1) - tol_power))
    throw numerical_error("bisection: power " + std::to_string(double(p)) + " outside tolerance of budget " +
                          std::to_string(double(budget)));
  return hi;
}

template <typename Real>
struct MuResult {
  Real mu = 0;
  Real power = 0;
  PrecoderSet<Real> precoders;
};

/// Solves P_k(mu) = (D_{s(k)} + mu I)^{-1} Y_k for the smallest mu >= 0 with
/// sum_k ||P_k(mu)||^2 <= budget. `shaping[s]` are Hermitian PSD, `which[k]`
/// picks the shaping matrix of user k.
template <typename Real>
MuResult<Real> mu_bisection(const std::vector<CMatrix<Real>>& shaping, const std::vector<std::size_t>& which,
                            const std::vector<CMatrix<Real>>& rhs, Real budget, Real tol_power = Real(1e-6),
                            int max_halvings = 60) {
  if (which.size() != rhs.size()) throw invalid_argument("mu_bisection: user count mismatch");
  if (!(budget > Real(0))) throw invalid_argument("mu_bisection: budget must be positive");
  struct Decomposed {
    CMatrix<Real> q;
    RVector<Real> lambda;
  };
  std::vector<Decomposed> dec;
  for (const auto& d : shaping) {
    Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(hermitian_part(d));
    if (es.info() != Eigen::Success) throw numerical_error("mu_bisection: eigendecomposition failed");
    dec.push_back({es.eigenvectors(), es.eigenvalues().cwiseMax(Real(0))});
  }
  std::vector<CMatrix<Real>> rotated;
  std::vector<RVector<Real>> energy;
  Real total_energy = 0;
  for (std::size_t k = 0; k < rhs.size(); ++k) {
    if (!all_finite(rhs[k])) throw numerical_error("mu_bisection: non-finite right-hand side");
    rotated.push_back(dec.at(which[k]).q.adjoint() * rhs[k]);
    energy.push_back(rotated.back().rowwise().squaredNorm());
    total_energy += energy.back().sum();
  }

  auto power_at = [&](Real mu) {
    Real acc = 0;
    for (std::size_t k = 0; k < rhs.size(); ++k) {
      const auto& lam = dec[which[k]].lambda;
      for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const Real den = lam(i) + mu;
        const Real e = energy[k](i);
        if (e <= Real(1e-30) * total_energy) continue;
        if (den <= Real(0)) return std::numeric_limits<Real>::infinity();
        acc += e / (den * den);
      }
    }
    return acc;
  };
  auto precoders_at = [&](Real mu) {
    PrecoderSet<Real> out;
    for (std::size_t k = 0; k < rhs.size(); ++k) {
      const auto& dk = dec[which[k]];
      RVector<Real> inv(dk.lambda.size());
      for (Eigen::Index i = 0; i < inv.size(); ++i) {
        const Real den = dk.lambda(i) + mu;
        inv(i) = (den > Real(0) && energy[k](i) > Real(1e-30) * total_energy) ? Real(1) / den : Real(0);
      }
      out.push_back(dk.q * (inv.template cast<Complex<Real>>().asDiagonal() * rotated[k]));
    }
    return out;
  };

  MuResult<Real> res;
  if (total_energy == Real(0)) {
    res.precoders = precoders_at(Real(0));
    return res;
  }
  res.mu = bisect_multiplier<Real>(power_at, budget, tol_power, max_halvings);
  res.power = power_at(res.mu);
  res.precoders = precoders_at(res.mu);
  return res;
}

// ---------------------------------------------------------------------------
// Algorithms 1 and 2

enum class MMVariant { kMinorizerG1, kMinorizerG2 };

/// Per-user surrogate matrices at the current iterate.
template <typename Real>
struct SurrogateTerms {
  std::vector<CMatrix<Real>> a, b_bar, c_bar;
};

template <typename Real>
SurrogateTerms<Real> surrogate_terms(const BlockCsi<Real>& csi, const PrecoderSet<Real>& precoders,
                                     const DEEvaluation<Real>& ev) {
  SurrogateTerms<Real> t;
  for (std::size_t k = 0; k < csi.num_users(); ++k) {
    const auto& user = csi.users[k];
    const auto& r = ev.covariances[k];
    t.a.push_back(compute_A(user, r));
    const auto& s = ev.states[k];
    const Eigen::Index d = precoders[k].cols();
    const CMatrix<Real> gp = s.gamma * precoders[k];
    const CMatrix<Real> inner = inverse_hpd<Real>(CMatrix<Real>::Identity(d, d) + precoders[k].adjoint() * gp);
    t.b_bar.push_back(hermitian_part(t.a.back() - s.gamma + gp * inner * gp.adjoint()));
    t.c_bar.push_back(compute_C_bar(user, s, r));
  }
  return t;
}

/// One MM update from an evaluated iterate.
template <typename Real>
MuResult<Real> mm_update(const BlockCsi<Real>& csi, const PrecoderSet<Real>& precoders, const DEEvaluation<Real>& ev,
                         const SystemConfig& cfg, MMVariant variant, const MMOptions& options = {}) {
  const SurrogateTerms<Real> t = surrogate_terms(csi, precoders, ev);
  const std::size_t users = csi.num_users();
  std::vector<CMatrix<Real>> shaping;
  std::vector<std::size_t> which(users);
  std::vector<CMatrix<Real>> rhs;
  if (variant == MMVariant::kMinorizerG1) {
    for (std::size_t k = 0; k < users; ++k) {
      shaping.push_back(compute_D_bar(t.c_bar, t.b_bar[k], cfg.weights, k));
      which[k] = k;
      rhs.push_back(Real(cfg.weights[k]) * (t.a[k] * precoders[k]));
    }
  } else {
    CMatrix<Real> shared = CMatrix<Real>::Zero(csi.tx(), csi.tx());
    for (std::size_t k = 0; k < users; ++k) shared += Real(cfg.weights[k]) * t.c_bar[k];
    shaping.push_back(hermitian_part(shared));
    for (std::size_t k = 0; k < users; ++k) {
      which[k] = 0;
      const CMatrix<Real> f = compute_F_bar(t.b_bar[k], t.c_bar[k], cfg.weights[k]);
      rhs.push_back((Real(cfg.weights[k]) * t.a[k] + f) * precoders[k]);
    }
  }
  return mu_bisection(shaping, which, rhs, Real(cfg.total_power), Real(options.tol_power), options.max_halvings);
}

/// Runs the MM iteration from `init` on the CSI of one block.
template <typename Real>
MMResult<Real> run_mm(const BlockCsi<Real>& csi, const SystemConfig& cfg, const PrecoderSet<Real>& init,
                      MMVariant variant, const MMOptions& options = {}) {
  const auto start = std::chrono::steady_clock::now();
  if (init.size() != csi.num_users()) throw invalid_argument("run_mm: precoder count mismatch");
  MMResult<Real> out;
  out.precoders = init;
  const Real sigma2 = Real(cfg.sigma2_z);
  DEEvaluation<Real> ev = evaluate_de(csi, out.precoders, cfg.weights, sigma2, options.de);
  out.report.objective.push_back(double(ev.objective));
  for (int it = 0; it < options.iterations; ++it) {
    MuResult<Real> upd;
    try {
      upd = mm_update(csi, out.precoders, ev, cfg, variant, options);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " (MM iteration " + std::to_string(it + 1) + ")");
    }
    out.precoders = std::move(upd.precoders);
    ev = evaluate_de(csi, out.precoders, cfg.weights, sigma2, options.de, &ev.states);
    out.report.objective.push_back(double(ev.objective));
    out.report.mu.push_back(double(upd.mu));
    out.report.power.push_back(double(total_power(out.precoders)));
    out.report.iterations = it + 1;
    const double before = out.report.objective[out.report.objective.size() - 2];
    const double after = out.report.objective.back();
    if (options.early_exit_rel > 0 && std::abs(after - before) < options.early_exit_rel * (1.0 + std::abs(before)))
      break;
  }
  out.final_evaluation = std::move(ev);
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

template <typename Real>
MMResult<Real> algorithm1(const BlockCsi<Real>& csi, const SystemConfig& cfg, const PrecoderSet<Real>& init,
                          const MMOptions& options = {}) {
  return run_mm(csi, cfg, init, MMVariant::kMinorizerG1, options);
}

template <typename Real>
MMResult<Real> algorithm2(const BlockCsi<Real>& csi, const SystemConfig& cfg, const PrecoderSet<Real>& init,
                          const MMOptions& options = {}) {
  return run_mm(csi, cfg, init, MMVariant::kMinorizerG2, options);
}

}  // namespace robprec
