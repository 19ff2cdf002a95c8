// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <doctest.h>

using namespace robprec;
using namespace robprec::testing;

namespace {

struct PicardResult {
  CMatrixd gamma, gamma_tilde;
};

// Damped Gauss-Seidel sweep on the dense Kronecker operators: refresh the
// transmit side (Phit, Gamma, G) first, then the receive side (Phi, Gammat, Gt).
PicardResult picard_oracle(const UserCsi<double>& user, const CMatrixd& p, const CMatrixd& r) {
  Eigen::SelfAdjointEigenSolver<CMatrixd> es(r);
  const CMatrixd rm = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().cast<std::complex<double>>().asDiagonal() *
                      es.eigenvectors().adjoint();
  const auto& k = user.kernel;
  const CMatrixd& h = user.hhat;
  const Eigen::Index d = p.cols(), mk = h.rows();
  const CMatrixd id = CMatrixd::Identity(d, d), ik = CMatrixd::Identity(mk, mk);
  CMatrixd g = id, gt = ik, gamma, gamma_tilde;
  for (int it = 0; it < 20000; ++it) {
    const CMatrixd phit = ik + rm * eta_oracle(k, CMatrixd(p * g * p.adjoint())) * rm;
    gamma = eta_tilde_oracle(k, CMatrixd(rm * gt * rm)) + h.adjoint() * rm * phit.inverse() * rm * h;
    const CMatrixd g_new = 0.5 * g + 0.5 * CMatrixd((id + p.adjoint() * gamma * p).inverse());
    const CMatrixd phi = id + p.adjoint() * eta_tilde_oracle(k, CMatrixd(rm * gt * rm)) * p;
    gamma_tilde = eta_oracle(k, CMatrixd(p * g_new * p.adjoint())) + h * p * phi.inverse() * p.adjoint() * h.adjoint();
    const CMatrixd gt_new = 0.5 * gt + 0.5 * CMatrixd((ik + rm * gamma_tilde * rm).inverse());
    const double change = (g_new - g).norm() + (gt_new - gt).norm();
    g = g_new;
    gt = gt_new;
    if (change < 1e-14) break;
  }
  return {gamma, gamma_tilde};
}

double logdet_exact(const CMatrixd& h, const CMatrixd& p, const CMatrixd& r) {
  const CMatrixd hp = h * p;
  const CMatrixd m = CMatrixd::Identity(r.rows(), r.rows()) + r.inverse() * hp * hp.adjoint();
  return std::log(std::abs(m.determinant()));
}

}  // namespace

TEST_CASE("degenerate fixed points") {
  Rng rng = derive_rng(31, {});
  const auto dft = make_dft<double>(6);
  SUBCASE("null channel") {
    UserCsi<double> user{CMatrixd::Zero(2, 6), {random_unitary<double>(2, rng), RMatrixd::Zero(2, 6), dft}};
    const CMatrixd p = complex_gaussian<double>(6, 2, rng);
    const CMatrixd r = 0.3 * CMatrixd::Identity(2, 2);
    const auto s = solve_fixed_point(user, p, r);
    CHECK(s.iterations_used == 1);
    CHECK(s.gamma.isZero(0));
    CHECK(s.gamma_tilde.isZero(0));
    CHECK(s.phi.isIdentity(0));
    CHECK(s.phi_tilde.isIdentity(0));
    CHECK(s.g.isIdentity(0));
    CHECK(s.g_tilde.isIdentity(0));
    CHECK(de_rate_form1(s, user, p, r) == 0.0);
  }
  SUBCASE("zero precoder") {
    UserCsi<double> user{complex_gaussian<double>(2, 6, rng), random_kernel(2, 6, rng, dft)};
    const CMatrixd p = CMatrixd::Zero(6, 2);
    const CMatrixd r = random_psd(2, rng) + CMatrixd::Identity(2, 2);
    const auto s = solve_fixed_point(user, p, r);
    const CMatrixd r_inv = r.inverse();
    CHECK(s.phi.isIdentity(1e-14));
    CHECK(s.gamma_tilde.norm() < 1e-14);
    CHECK(s.g_tilde.isIdentity(1e-14));
    const CMatrixd expected = eta_tilde_oracle(user.kernel, r_inv) + user.hhat.adjoint() * r_inv * user.hhat;
    CHECK(relative_frobenius(s.gamma, expected) < 1e-10);
    CHECK(de_rate_form1(s, user, p, r) == doctest::Approx(0.0));
    CHECK(de_rate_form2(s, user, p, r) == doctest::Approx(0.0));
  }
  SUBCASE("bad arguments") {
    UserCsi<double> user{complex_gaussian<double>(2, 6, rng), random_kernel(2, 6, rng, dft)};
    const CMatrixd r = CMatrixd::Identity(2, 2);
    CHECK_THROWS_AS(solve_fixed_point(user, CMatrixd(CMatrixd::Zero(5, 2)), r), Error);
    DEOptions bad;
    bad.tol = 0;
    CHECK_THROWS_AS(solve_fixed_point(user, CMatrixd(CMatrixd::Ones(6, 2)), r, bad), Error);
  }
}

TEST_CASE("fixed point against an independent Picard iteration") {
  Rng rng = derive_rng(32, {});
  const auto dft = make_dft<double>(8);
  for (int trial = 0; trial < 3; ++trial) {
    UserCsi<double> user{0.7 * complex_gaussian<double>(2, 8, rng), random_kernel(2, 8, rng, dft)};
    const CMatrixd p = 0.5 * complex_gaussian<double>(8, 2, rng);
    const CMatrixd r = random_psd(2, rng) + 0.2 * CMatrixd::Identity(2, 2);
    DEOptions opt;
    opt.tol = 1e-12;
    const auto s = solve_fixed_point(user, p, r, opt);
    const auto ref = picard_oracle(user, p, r);
    CHECK((s.gamma - ref.gamma).norm() <= 1e-6);
    CHECK((s.gamma_tilde - ref.gamma_tilde).norm() <= 1e-6);
  }
}

TEST_CASE("state invariants and the two rate forms") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto in = make_instance(12, 3, 2, seed % 2 ? 0.0 : 15.0, {0.9, 0.6}, seed);
    const auto csi = in.posterior.block_csi(4);
    Rng rng = derive_rng(seed, {33});
    const auto p = random_precoders<double>(in.cfg, rng);
    DEOptions opt;
    opt.tol = 1e-10;
    const auto ev = evaluate_de(csi, p, in.cfg.weights, in.cfg.sigma2_z, opt);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& s = ev.states[k];
      const CMatrixd& r = ev.covariances[k];
      const Eigen::Index d = p[k].cols();
      CHECK(s.residual <= 1e-10);
      const CMatrixd g_ref = (CMatrixd::Identity(d, d) + p[k].adjoint() * s.gamma * p[k]).inverse();
      CHECK(relative_frobenius(s.g, g_ref) <= 10 * opt.tol);
      Eigen::SelfAdjointEigenSolver<CMatrixd> es(r);
      const CMatrixd rm = es.eigenvectors() *
                          es.eigenvalues().cwiseInverse().cwiseSqrt().cast<std::complex<double>>().asDiagonal() *
                          es.eigenvectors().adjoint();
      const CMatrixd gt_ref = (CMatrixd::Identity(2, 2) + rm * s.gamma_tilde * rm).inverse();
      CHECK(relative_frobenius(s.g_tilde, gt_ref) <= 10 * opt.tol);
      for (const CMatrixd* m : {&s.gamma, &s.gamma_tilde, &s.phi, &s.phi_tilde, &s.g, &s.g_tilde})
        CHECK(hermitian_defect(*m) <= 1e-10);
      const double f1 = de_rate_form1(s, csi.users[k], p[k], r);
      const double f2 = de_rate_form2(s, csi.users[k], p[k], r);
      CHECK(f1 > 0);
      CHECK(std::abs(f1 - f2) <= 1e-6 * std::max(f1, f2));
      CHECK(ev.rates[k] == f1);
    }
  }
}

TEST_CASE("deterministic channels are exact") {
  Rng rng = derive_rng(34, {});
  const auto dft = make_dft<double>(8);
  std::vector<CMatrixd> h{complex_gaussian<double>(2, 8, rng), complex_gaussian<double>(3, 8, rng)};
  const auto csi = exact_csi(h, dft);
  std::vector<CMatrixd> p{complex_gaussian<double>(8, 2, rng), complex_gaussian<double>(8, 3, rng)};
  const auto ev = evaluate_de(csi, p, {1.0, 0.5}, 0.2);
  double expected = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    const double exact = logdet_exact(h[k], p[k], ev.covariances[k]);
    CHECK(std::abs(ev.rates[k] - exact) <= 1e-8);
    CHECK(std::abs(de_rate_form2(ev.states[k], csi.users[k], p[k], ev.covariances[k]) - exact) <= 1e-8);
    expected += (k == 0 ? 1.0 : 0.5) * exact;
  }
  CHECK(std::abs(ev.objective - expected) <= 1e-8);
  CHECK(std::abs(de_weighted_sum_rate(ev.states, csi, p, ev.covariances, {1.0, 0.5}) - expected) <= 1e-8);

  const auto single = exact_csi({h[0]}, dft);
  const auto one = evaluate_de(single, {p[0]}, {2.0}, 0.2);
  CHECK(std::abs(one.objective - 2.0 * logdet_exact(h[0], p[0], 0.2 * CMatrixd::Identity(2, 2))) <= 1e-8);

  const std::vector<CMatrixd> zeros{CMatrixd::Zero(8, 2), CMatrixd::Zero(8, 3)};
  CHECK(evaluate_de(csi, zeros, {1.0, 1.0}, 0.2).objective == doctest::Approx(0.0));
}

TEST_CASE("convergence failure and warm start") {
  const auto in = make_instance(16, 2, 2, 10.0, {0.9}, 7);
  const auto csi = in.posterior.block_csi(3);
  Rng rng = derive_rng(35, {});
  const auto p = random_precoders<double>(in.cfg, rng);
  const CMatrixd r = interference_covariance(csi, p, 0, in.cfg.sigma2_z);
  DEOptions tight;
  tight.tol = 1e-15;
  tight.max_iter = 2;
  try {
    solve_fixed_point(csi.users[0], p[0], r, tight);
    FAIL("expected a convergence error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumerical);
    CHECK(std::string(e.what()).find("last residual") != std::string::npos);
  }
  int sweeps = 0;
  DEOptions traced;
  traced.trace = [&sweeps](int, double) { ++sweeps; };
  const auto cold = solve_fixed_point(csi.users[0], p[0], r, traced);
  CHECK(sweeps == cold.iterations_used);
  const auto warm = solve_fixed_point(csi.users[0], p[0], r, DEOptions{}, &cold);
  CHECK(warm.iterations_used < cold.iterations_used);
  CHECK(warm.iterations_used <= 2);
}

TEST_CASE("agreement with Monte Carlo") {
  const auto in = make_instance(16, 4, 2, 10.0, {0.9}, 8);
  const auto csi = in.posterior.block_csi(4);
  Rng rng = derive_rng(36, {});
  const auto p = random_precoders<double>(in.cfg, rng);
  const auto ev = evaluate_de(csi, p, in.cfg.weights, in.cfg.sigma2_z);
  double mc_sum = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double mc = mc_user_rate(csi.users[k], p[k], ev.covariances[k], 10000, rng);
    CHECK(std::abs(ev.rates[k] - mc) / mc <= 0.03);
    mc_sum += in.cfg.weights[k] * mc;
  }
  CHECK(std::abs(ev.objective - mc_sum) / mc_sum <= 0.03);
}

// The band grows with the array so the effective dimension grows too; 1e5
// draws keep the Monte Carlo error well below the DE error being compared.
TEST_CASE("accuracy improves with the array size") {
  auto mean_error = [](int mt) {
    double total = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto in = make_instance(mt, 4, 2, 10.0, {0.9}, 100 + seed, mt / 2);
      const auto csi = in.posterior.block_csi(4);
      Rng rng = derive_rng(seed, {37, std::uint64_t(mt)});
      const auto p = random_precoders<double>(in.cfg, rng);
      const auto ev = evaluate_de(csi, p, in.cfg.weights, in.cfg.sigma2_z);
      double mc = 0;
      for (std::size_t k = 0; k < 4; ++k) mc += mc_user_rate(csi.users[k], p[k], ev.covariances[k], 100000, rng);
      total += std::abs(ev.objective - mc) / mc;
    }
    return total / 20;
  };
  const double e8 = mean_error(8), e32 = mean_error(32);
  MESSAGE("mean relative DE error: M_t=8 " << e8 << ", M_t=32 " << e32);
  CHECK(e32 <= e8);
}
