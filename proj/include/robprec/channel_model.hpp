// SPDX-License-Identifier: Apache-2.0
//
// Jointly correlated channel model H = U (M o W) V^H with a DFT transmit basis,
// Gauss-Markov block aging and the orthogonal uplink pilot observation.

#pragma once

#include "robprec/config.hpp"
#include "robprec/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <vector>

namespace robprec {

/// Unitary DFT, V(p,q) = exp(-i 2 pi p q / M) / sqrt(M), zero-based.
template <typename Real>
class DftMatrix {
 public:
  explicit DftMatrix(Eigen::Index size) : size_(size), twiddle_(size), matrix_(size, size) {
    if (size <= 0) throw invalid_argument("DFT size must be positive");
    for (Eigen::Index t = 0; t < size; ++t) {
      const double angle = -2.0 * std::numbers::pi * double(t) / double(size);
      twiddle_[t] = Complex<Real>(Real(std::cos(angle)), Real(std::sin(angle)));
    }
    const Real scale = Real(1) / std::sqrt(Real(size));
    for (Eigen::Index q = 0; q < size; ++q)
      for (Eigen::Index p = 0; p < size; ++p) matrix_(p, q) = scale * twiddle_[(p * q) % size];
  }

  Eigen::Index size() const { return size_; }
  const CMatrix<Real>& matrix() const { return matrix_; }

  /// diag(V^H C V) for Hermitian C in O(M^2) via wrapped-diagonal sums.
  RVector<Real> beam_diagonal(const CMatrix<Real>& c) const {
    const Eigen::Index m = size_;
    std::vector<Complex<Real>> wrapped(m, Complex<Real>(0));
    for (Eigen::Index q = 0; q < m; ++q)
      for (Eigen::Index p = 0; p < m; ++p) wrapped[(p - q + m) % m] += c(p, q);
    RVector<Real> out(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      Complex<Real> acc(0);
      // exp(+i 2 pi d j / M) is the conjugate twiddle.
      for (Eigen::Index d = 0; d < m; ++d) acc += wrapped[d] * std::conj(twiddle_[(d * j) % m]);
      out(j) = acc.real() / Real(m);
    }
    return out;
  }

  /// V diag(lambda) V^H, a circulant matrix, in O(M^2).
  CMatrix<Real> circulant(const RVector<Real>& lambda) const {
    const Eigen::Index m = size_;
    std::vector<Complex<Real>> first(m);
    for (Eigen::Index d = 0; d < m; ++d) {
      Complex<Real> acc(0);
      for (Eigen::Index j = 0; j < m; ++j) acc += lambda(j) * twiddle_[(d * j) % m];
      first[d] = acc / Real(m);
    }
    CMatrix<Real> out(m, m);
    for (Eigen::Index q = 0; q < m; ++q)
      for (Eigen::Index p = 0; p < m; ++p) out(p, q) = first[(p - q + m) % m];
    return out;
  }

  /// Squared row norms of V^H P: the power each beam carries in P P^H.
  RVector<Real> beam_powers(const CMatrix<Real>& p) const {
    return (matrix_.adjoint() * p).rowwise().squaredNorm();
  }

 private:
  Eigen::Index size_;
  std::vector<Complex<Real>> twiddle_;
  CMatrix<Real> matrix_;
};

template <typename Real>
using DftPtr = std::shared_ptr<const DftMatrix<Real>>;

template <typename Real>
DftPtr<Real> make_dft(Eigen::Index size) {
  return std::make_shared<const DftMatrix<Real>>(size);
}

/// A priori statistics of one user: eigenbasis, coupling matrix, aging.
template <typename Real>
struct UserStatistics {
  CMatrix<Real> U;      // M_k x M_k unitary
  RMatrix<Real> omega;  // M_k x M_t, entries >= 0
  RMatrix<Real> mask;   // sqrt(omega)
  Real alpha = 1;

  UserStatistics() = default;
  UserStatistics(CMatrix<Real> u, RMatrix<Real> omega_in, Real alpha_in)
      : U(std::move(u)), omega(std::move(omega_in)), alpha(alpha_in) {
    if (U.rows() != U.cols() || U.rows() != omega.rows())
      throw invalid_argument("UserStatistics: U must be M_k x M_k matching omega rows");
    if ((omega.array() < Real(0)).any()) throw invalid_argument("UserStatistics: negative coupling entry");
    // Omega is re-derived from the mask so that mask o mask == omega bit for bit.
    mask = omega.array().sqrt().matrix();
    omega = mask.cwiseProduct(mask);
  }

  Eigen::Index rx() const { return omega.rows(); }
  Eigen::Index tx() const { return omega.cols(); }
};

/// Per-user, per-block true channels of one slot: H[k][n-1], n = 1..N_b.
template <typename Real>
struct TrueChannelSlot {
  std::vector<std::vector<CMatrix<Real>>> H;
};

/// J0(2 pi v f_c T / c), clamped to [0, 1].
double jakes_alpha(double speed_mps, double carrier_hz, double block_seconds);

/// Haar-distributed unitary via QR of a Gaussian matrix with phase correction.
template <typename Real>
CMatrix<Real> random_unitary(Eigen::Index n, Rng& rng) {
  CMatrix<Real> g = complex_gaussian<Real>(n, n, rng);
  Eigen::HouseholderQR<CMatrix<Real>> qr(g);
  CMatrix<Real> q = qr.householderQ() * CMatrix<Real>::Identity(n, n);
  const CMatrix<Real> r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Real mag = std::abs(r(i, i));
    if (mag > Real(0)) q.col(i) *= r(i, i) / mag;
  }
  return q;
}

/// Synthetic jointly correlated statistics: a contiguous (wrapping) band of
/// active beams per user with log-normal power perturbation, normalized so
/// that the coupling entries sum to M_k * M_t.
template <typename Real>
std::vector<UserStatistics<Real>> generate_synthetic_stats(const SystemConfig& cfg, const GeneratorProfile& profile,
                                                           Rng& rng) {
  for (int k = 0; k < cfg.num_users; ++k) {
    if (k >= int(profile.band_width.size()) || profile.band_width[k] < 1 || profile.band_width[k] > cfg.num_tx)
      throw invalid_argument("invalid profile");
  }
  if (int(profile.alpha.size()) < cfg.num_users) throw invalid_argument("invalid profile");
  const int mt = cfg.num_tx;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> beam(0, mt - 1);
  std::vector<UserStatistics<Real>> out;
  out.reserve(cfg.num_users);
  for (int k = 0; k < cfg.num_users; ++k) {
    const int mk = cfg.rx_antennas[k];
    CMatrix<Real> u = random_unitary<Real>(mk, rng);
    const int width = profile.band_width[k];
    int start = k < int(profile.band_start.size()) ? profile.band_start[k] : -1;
    if (start < 0) start = beam(rng);
    RMatrix<Real> omega = RMatrix<Real>::Zero(mk, mt);
    const double centre = 0.5 * double(width - 1);
    for (int b = 0; b < width; ++b) {
      const int col = (start + b) % mt;
      const double base_db = -profile.decay_db_per_beam * std::abs(double(b) - centre);
      for (int i = 0; i < mk; ++i) {
        const double perturb_db = profile.lognormal_sigma_db > 0 ? profile.lognormal_sigma_db * normal(rng) : 0.0;
        omega(i, col) = Real(std::pow(10.0, (base_db + perturb_db) / 10.0));
      }
    }
    omega *= Real(double(mk) * double(mt)) / omega.sum();
    out.emplace_back(std::move(u), std::move(omega), Real(profile.alpha[k]));
  }
  return out;
}

/// U from the descending eigendecomposition of the sample covariance, then
/// Omega = mean over samples of |U^H H V|^2 (elementwise).
template <typename Real>
UserStatistics<Real> estimate_stats_from_samples(const std::vector<CMatrix<Real>>& samples,
                                                 const DftMatrix<Real>& dft) {
  if (samples.empty()) throw invalid_argument("estimate_stats_from_samples: no samples");
  const Eigen::Index mk = samples.front().rows();
  const Eigen::Index mt = samples.front().cols();
  if (mt != dft.size()) throw invalid_argument("estimate_stats_from_samples: sample width != DFT size");
  CMatrix<Real> cov = CMatrix<Real>::Zero(mk, mk);
  for (const auto& h : samples) {
    if (h.rows() != mk || h.cols() != mt) throw invalid_argument("estimate_stats_from_samples: ragged samples");
    if (!all_finite(h)) throw invalid_argument("estimate_stats_from_samples: non-finite sample");
    cov.noalias() += h * h.adjoint();
  }
  cov /= Real(samples.size());
  Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(hermitian_part(cov));
  std::vector<Eigen::Index> order(mk);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  const auto& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return ev(a) > ev(b); });
  CMatrix<Real> u(mk, mk);
  for (Eigen::Index i = 0; i < mk; ++i) u.col(i) = es.eigenvectors().col(order[i]);

  RMatrix<Real> omega = RMatrix<Real>::Zero(mk, mt);
  const CMatrix<Real> uh = u.adjoint();
  for (const auto& h : samples) omega += (uh * h * dft.matrix()).cwiseAbs2();
  omega /= Real(samples.size());
  omega = omega.cwiseMax(Real(0));
  return UserStatistics<Real>(std::move(u), std::move(omega), Real(1));
}

/// One draw of U (M o W) V^H.
template <typename Real>
CMatrix<Real> sample_channel(const UserStatistics<Real>& stats, const DftMatrix<Real>& dft, Rng& rng) {
  const CMatrix<Real> w = complex_gaussian<Real>(stats.rx(), stats.tx(), rng);
  const CMatrix<Real> core = stats.mask.template cast<Complex<Real>>().cwiseProduct(w);
  return stats.U * core * dft.matrix().adjoint();
}

/// Gauss-Markov evolution H_{n+1} = a H_n + sqrt(1 - a^2) U (M o W) V^H.
template <typename Real>
TrueChannelSlot<Real> evolve_slot(const std::vector<UserStatistics<Real>>& stats, const DftMatrix<Real>& dft,
                                  int blocks, Rng& rng) {
  if (blocks < 1) throw invalid_argument("evolve_slot: need at least one block");
  TrueChannelSlot<Real> slot;
  slot.H.resize(stats.size());
  for (std::size_t k = 0; k < stats.size(); ++k) slot.H[k].push_back(sample_channel(stats[k], dft, rng));
  for (int n = 1; n < blocks; ++n) {
    for (std::size_t k = 0; k < stats.size(); ++k) {
      const Real a = stats[k].alpha;
      const Real innovation = std::sqrt(std::max<Real>(Real(0), Real(1) - a * a));
      CMatrix<Real> next = a * slot.H[k].back();
      if (innovation > Real(0)) next += innovation * sample_channel(stats[k], dft, rng);
      slot.H[k].push_back(std::move(next));
    }
  }
  return slot;
}

/// Rows of the T x T unitary DFT handed out in user order.
template <typename Real>
std::vector<CMatrix<Real>> build_orthogonal_pilots(const SystemConfig& cfg) {
  const int t = cfg.block_length;
  if (cfg.total_rx() > t) throw invalid_argument("pilot capacity exceeded");
  const DftMatrix<Real> dft(t);
  std::vector<CMatrix<Real>> pilots;
  int row = 0;
  for (int k = 0; k < cfg.num_users; ++k) {
    const int mk = cfg.rx_antennas[k];
    pilots.push_back(dft.matrix().block(row, 0, mk, t));
    row += mk;
  }
  return pilots;
}

/// Y = sum_k H_{k,1}^T X_k + Z with Z i.i.d. CN(0, sigma2_bs).
template <typename Real>
CMatrix<Real> simulate_uplink_observation(const TrueChannelSlot<Real>& slot, const std::vector<CMatrix<Real>>& pilots,
                                          Real sigma2_bs, Rng& rng) {
  if (slot.H.size() != pilots.size() || slot.H.empty())
    throw invalid_argument("simulate_uplink_observation: user count mismatch");
  const Eigen::Index mt = slot.H.front().front().cols();
  const Eigen::Index t = pilots.front().cols();
  CMatrix<Real> y = CMatrix<Real>::Zero(mt, t);
  for (std::size_t k = 0; k < pilots.size(); ++k) {
    const auto& h = slot.H[k].front();
    if (h.rows() != pilots[k].rows() || pilots[k].cols() != t)
      throw invalid_argument("simulate_uplink_observation: pilot shape mismatch");
    y.noalias() += h.transpose() * pilots[k];
  }
  const CMatrix<Real> z = complex_gaussian<Real>(mt, t, rng);
  if (sigma2_bs > Real(0)) y += std::sqrt(sigma2_bs) * z;
  return y;
}

}  // namespace robprec
