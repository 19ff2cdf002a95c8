// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace robprec;
using namespace robprec::testing;

namespace {

RMatrixd off_diagonal(const CMatrixd& m) {
  RMatrixd out = m.cwiseAbs();
  out.diagonal().setZero();
  return out;
}

BeamAllocation<double> random_allocation(const std::vector<UserStatistics<double>>& stats, const SystemConfig& cfg,
                                         Rng& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  BeamAllocation<double> alloc = initial_beam_allocation(stats, cfg);
  for (auto& a : alloc.amplitude)
    for (Eigen::Index j = 0; j < a.size(); ++j) a(j) = u(rng);
  const double scale = std::sqrt(cfg.total_power / alloc.total_power());
  for (auto& a : alloc.amplitude) a *= scale;
  return alloc;
}

}  // namespace

TEST_CASE("beam ordering") {
  RMatrixd om(1, 3);
  om << 1, 2, 3;
  const UserStatistics<double> s(CMatrixd::Identity(1, 1), om, 1.0);
  CHECK(beam_order(s) == std::vector<int>{2, 1, 0});
  const UserStatistics<double> flat(CMatrixd::Identity(2, 2), RMatrixd::Ones(2, 5), 1.0);
  CHECK(beam_order(flat) == std::vector<int>{0, 1, 2, 3, 4});

  const auto in = make_instance(16, 3, 2, 10.0, {0.9}, 3);
  for (const auto& st : in.stats) {
    const RVectord a = beam_power_vector(st);
    CHECK(a.sum() == doctest::Approx(st.omega.sum()).epsilon(1e-14));
    CHECK(a.minCoeff() >= 0);
    const auto order = beam_order(st);
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> iota(16);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    for (std::size_t j = 1; j < order.size(); ++j) {
      CHECK(a(order[j - 1]) >= a(order[j]));
      if (a(order[j - 1]) == a(order[j])) CHECK(order[j - 1] < order[j]);
    }
  }
}

TEST_CASE("beam-domain DE equals the matrix DE on beam-aligned precoders") {
  const auto in = make_instance(16, 4, 2, 10.0, {0.9}, 4);
  Rng rng = derive_rng(52, {});
  const auto alloc = random_allocation(in.stats, in.cfg, rng);
  DEOptions opt;
  opt.tol = 1e-12;
  const auto beam = evaluate_beam_de(in.stats, alloc, in.cfg.weights, in.cfg.sigma2_z, opt);
  const auto csi = statistical_csi(in.stats, in.dft);
  const auto p = alloc.precoders(*in.dft);
  const auto dense = evaluate_de(csi, p, in.cfg.weights, in.cfg.sigma2_z, opt);
  CHECK(std::abs(beam.objective - dense.objective) <= 1e-9 * dense.objective);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::abs(beam.rates[k] - dense.rates[k]) <= 1e-9 * std::max(1.0, dense.rates[k]));
    const CMatrixd vg = in.dft->matrix().adjoint() * dense.states[k].gamma * in.dft->matrix();
    CHECK(off_diagonal(vg).maxCoeff() <= 1e-12 * std::max(1.0, vg.norm()));
    const CMatrixd ug = in.stats[k].U.adjoint() * dense.states[k].gamma_tilde * in.stats[k].U;
    CHECK(off_diagonal(ug).maxCoeff() <= 1e-12 * std::max(1.0, ug.norm()));
    CHECK((vg.diagonal().real() - beam.states[k].gamma).norm() <= 1e-9 * std::max(1.0, vg.norm()));
  }
  CHECK(alloc.total_power() == doctest::Approx(in.cfg.total_power).epsilon(1e-12));
  CHECK(total_power(p) == doctest::Approx(in.cfg.total_power).epsilon(1e-12));
}

TEST_CASE("one beam-domain step equals one matrix step of algorithm 2") {
  const auto in = make_instance(16, 4, 2, 10.0, {0.9}, 5);
  Rng rng = derive_rng(53, {});
  const auto alloc = random_allocation(in.stats, in.cfg, rng);
  DEOptions de;
  de.tol = 1e-12;
  MMOptions opt;
  opt.de = de;
  const auto beam = evaluate_beam_de(in.stats, alloc, in.cfg.weights, in.cfg.sigma2_z, de);
  const auto sur = beam_surrogate(in.stats, alloc, beam, in.cfg.weights);
  const auto [next, mu] = beam_update(alloc, sur, in.cfg.total_power, opt);

  const auto csi = statistical_csi(in.stats, in.dft);
  const auto p = alloc.precoders(*in.dft);
  const auto dense = evaluate_de(csi, p, in.cfg.weights, in.cfg.sigma2_z, de);
  const auto step = mm_update(csi, p, dense, in.cfg, MMVariant::kMinorizerG2, opt);
  CHECK(std::abs(step.mu - mu) <= 1e-8 * std::max(1.0, mu));
  for (std::size_t k = 0; k < 4; ++k) {
    const RVectord dense_beams = in.dft->beam_powers(step.precoders[k]);
    CHECK((dense_beams - next.beam_powers(k, 16)).norm() <= 1e-8 * in.cfg.total_power);
  }
  CHECK(verify_beam_structure(step.precoders, *in.dft, 1e-10).aligned);
}

TEST_CASE("algorithm 3 runs") {
  const auto in = make_instance(16, 4, 2, 10.0, {0.9}, 6);
  MMOptions opt;
  opt.iterations = 500;
  opt.early_exit_rel = 1e-13;
  const auto res = algorithm3(in.stats, in.cfg, opt);
  const auto& rep = res.report.mm;
  for (std::size_t i = 1; i < rep.objective.size(); ++i)
    CHECK(rep.objective[i] >= rep.objective[i - 1] - 1e-8 * (1 + std::abs(rep.objective[i - 1])));
  for (std::size_t i = 0; i < rep.power.size(); ++i) {
    CHECK(rep.power[i] <= in.cfg.total_power * (1 + 1e-9));
    if (rep.mu[i] > 0) CHECK(std::abs(rep.power[i] - in.cfg.total_power) <= 1e-6 * in.cfg.total_power);
  }
  INFO("iterations " << rep.iterations);
  CHECK(res.report.kkt_residual <= 1e-5);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(res.allocation.amplitude[k].minCoeff() >= 0);
    CHECK(res.allocation.amplitude[k].size() == in.cfg.streams[k]);
    CHECK(res.allocation.order[k] == beam_order(in.stats[k]));
  }
  const auto p = res.allocation.precoders(*in.dft);
  CHECK(verify_beam_structure(p, *in.dft, 1e-10).aligned);
  CHECK(verify_beam_columns(p, *in.dft, 1e-10).aligned);

  SUBCASE("relabeling beams leaves the objective unchanged") {
    std::vector<int> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = derive_rng(54, {});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<UserStatistics<double>> relabeled;
    for (const auto& s : in.stats) {
      RMatrixd om(s.omega.rows(), 16);
      for (int j = 0; j < 16; ++j) om.col(perm[j]) = s.omega.col(j);
      relabeled.emplace_back(s.U, om, s.alpha);
    }
    const auto other = algorithm3(relabeled, in.cfg, opt);
    CHECK(std::abs(other.report.mm.objective.back() - rep.objective.back()) <= 1e-10 * rep.objective.back());
    for (std::size_t k = 0; k < 4; ++k) {
      const RVectord q = res.allocation.beam_powers(k, 16);
      const RVectord qp = other.allocation.beam_powers(k, 16);
      for (int j = 0; j < 16; ++j) CHECK(std::abs(qp(perm[j]) - q(j)) <= 1e-10);
    }
  }
  SUBCASE("vanishing power") {
    SystemConfig tiny = in.cfg;
    tiny.total_power = 1e-12;
    const auto t = algorithm3(in.stats, tiny, opt);
    CHECK(t.report.mm.objective.back() < 1e-9);
    CHECK(t.allocation.total_power() <= 1e-12 * (1 + 1e-9));
  }
  CHECK_THROWS_AS(algorithm3(std::vector<UserStatistics<double>>(in.stats.begin(), in.stats.begin() + 2), in.cfg),
                  Error);
}

TEST_CASE("single user on a flat profile spreads power evenly") {
  SystemConfig cfg = SystemConfig::uniform(8, 1, 2).at_snr(10.0);
  cfg.streams = {3};
  const std::vector<UserStatistics<double>> stats{{CMatrixd::Identity(2, 2), RMatrixd::Ones(2, 8), 1.0}};
  Rng rng = derive_rng(55, {});
  const auto init = random_allocation(stats, cfg, rng);
  CHECK(init.amplitude[0].maxCoeff() - init.amplitude[0].minCoeff() > 0.05);
  MMOptions opt;
  opt.iterations = 2000;
  opt.early_exit_rel = 1e-15;
  const auto res = algorithm3(stats, cfg, opt, &init);
  const RVectord a = res.allocation.amplitude[0].cwiseAbs2();
  CHECK((a.array() - cfg.total_power / 3).abs().maxCoeff() <= 1e-6);
  CHECK(res.allocation.order[0] == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("beam structure checks") {
  Rng rng = derive_rng(56, {});
  const auto dft = make_dft<double>(8);
  const PrecoderSet<double> gaussian{complex_gaussian<double>(8, 2, rng), complex_gaussian<double>(8, 3, rng)};
  CHECK_FALSE(verify_beam_structure(gaussian, *dft, 1e-3).aligned);
  CHECK_FALSE(verify_beam_columns(gaussian, *dft, 1e-3).aligned);

  // A right rotation keeps the column space on the beams but mixes columns.
  CMatrixd p = CMatrixd::Zero(8, 2);
  p.col(0) = 0.8 * dft->matrix().col(3);
  p.col(1) = 0.3 * dft->matrix().col(6);
  const CMatrixd rotated = p * random_unitary<double>(2, rng);
  CHECK(verify_beam_structure(PrecoderSet<double>{rotated}, *dft, 1e-10).aligned);
  CHECK_FALSE(verify_beam_columns(PrecoderSet<double>{rotated}, *dft, 1e-3).aligned);
  CHECK(verify_beam_columns(PrecoderSet<double>{p}, *dft, 1e-10).aligned);
}

TEST_CASE("algorithm 3 against algorithm 1 at the zero-mean point") {
  const auto in = make_instance(16, 4, 2, 10.0, {0.9}, 7);
  const auto csi = statistical_csi(in.stats, in.dft);
  MMOptions opt;
  opt.iterations = 100;
  const auto a3 = algorithm3(in.stats, in.cfg, opt);
  Rng rng = derive_rng(57, {});
  const auto a1 = algorithm1(csi, in.cfg, random_precoders<double>(in.cfg, rng), opt);
  const double f3 = a3.report.mm.objective.back(), f1 = a1.report.objective.back();
  MESSAGE("zero-mean DE sum-rate: algorithm3 " << f3 << ", algorithm1 " << f1);
  CHECK(std::abs(f3 - f1) <= 0.02 * f1);
  const auto gram = verify_beam_structure(a1.precoders, *in.dft, 1e-4);
  const auto cols = verify_beam_columns(a1.precoders, *in.dft, 1e-4);
  MESSAGE("algorithm1 zero-mean precoders: Gram off-beam mass " << gram.off_structure << ", column off-beam mass "
                                                                 << cols.off_structure);
}
