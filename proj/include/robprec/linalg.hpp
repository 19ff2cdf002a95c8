// SPDX-License-Identifier: Apache-2.0
//
// Dense complex linear-algebra helpers shared by every module. Everything is
// templated on the real scalar type; the library is exercised with double.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace robprec {

template <typename Real>
using Complex = std::complex<Real>;
template <typename Real>
using CMatrix = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using RMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using CVector = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, 1>;
template <typename Real>
using RVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using CMatrixd = CMatrix<double>;
using RMatrixd = RMatrix<double>;
using CVectord = CVector<double>;
using RVectord = RVector<double>;

using Rng = std::mt19937_64;

enum class ErrorKind { kInvalidArgument, kConfig, kNumerical };

/// Library error. `kind` maps onto the CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_argument(const std::string& what) { return {ErrorKind::kInvalidArgument, what}; }
inline Error numerical_error(const std::string& what) { return {ErrorKind::kNumerical, what}; }
inline Error config_error(const std::string& what) { return {ErrorKind::kConfig, what}; }

/// Independent sub-stream derived from a master seed and a path of indices.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (auto p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// i.i.d. CN(0,1) entries: real and imaginary parts each N(0, 1/2).
template <typename Real>
CMatrix<Real> complex_gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  CMatrix<Real> out(rows, cols);
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      out(i, j) = Complex<Real>(static_cast<Real>(re), static_cast<Real>(im));
    }
  }
  return out;
}

template <typename Derived>
auto hermitian_part(const Eigen::MatrixBase<Derived>& m) {
  return ((m + m.adjoint()) / typename Derived::RealScalar(2)).eval();
}

template <typename Derived>
typename Derived::RealScalar hermitian_defect(const Eigen::MatrixBase<Derived>& m) {
  using Real = typename Derived::RealScalar;
  const Real scale = std::max<Real>(Real(1), m.norm());
  return (m - m.adjoint()).norm() / scale;
}

template <typename Real>
CMatrix<Real> identity(Eigen::Index n) {
  return CMatrix<Real>::Identity(n, n);
}

/// Inverse of a Hermitian positive-definite matrix.
template <typename Real>
CMatrix<Real> inverse_hpd(const CMatrix<Real>& m) {
  const Eigen::Index n = m.rows();
  Eigen::LLT<CMatrix<Real>> llt(hermitian_part(m));
  if (llt.info() != Eigen::Success) {
    throw numerical_error("matrix is not Hermitian positive definite");
  }
  CMatrix<Real> inv = llt.solve(CMatrix<Real>::Identity(n, n));
  return hermitian_part(inv);
}

/// log det of a Hermitian positive-definite matrix (natural log).
template <typename Real>
Real logdet_hpd(const CMatrix<Real>& m) {
  Eigen::LLT<CMatrix<Real>> llt(hermitian_part(m));
  if (llt.info() != Eigen::Success) {
    throw numerical_error("logdet of a matrix that is not Hermitian positive definite");
  }
  Real acc = 0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < m.rows(); ++i) acc += std::log(std::real(l(i, i)));
  return Real(2) * acc;
}

/// R^{-1/2} for Hermitian PD R, with eigenvalues floored at 1e-14 tr(R)/n.
template <typename Real>
CMatrix<Real> inverse_sqrt_hpd(const CMatrix<Real>& m) {
  const Eigen::Index n = m.rows();
  Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(hermitian_part(m));
  if (es.info() != Eigen::Success) throw numerical_error("eigendecomposition failed");
  const Real floor = Real(1e-14) * std::max<Real>(std::real(m.trace()) / Real(n), Real(0));
  RVector<Real> d = es.eigenvalues();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Real v = std::max(d(i), floor);
    if (!(v > 0)) throw numerical_error("inverse square root of a singular matrix");
    d(i) = Real(1) / std::sqrt(v);
  }
  CMatrix<Real> out = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
  return hermitian_part(out);
}

template <typename Real>
Real relative_frobenius(const CMatrix<Real>& a, const CMatrix<Real>& reference) {
  const Real denom = reference.norm();
  const Real diff = (a - reference).norm();
  if (denom == Real(0)) return diff;
  return diff / denom;
}

template <typename Real>
bool all_finite(const CMatrix<Real>& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
  return true;
}

}  // namespace robprec
