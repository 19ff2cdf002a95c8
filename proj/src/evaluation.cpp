// SPDX-License-Identifier: Apache-2.0

#include "robprec/evaluation.hpp"

#include <cmath>
#include <sstream>

namespace robprec {

Rng stream(std::uint64_t seed, Stream role, std::uint64_t slot, std::uint64_t extra) {
  return derive_rng(seed, {static_cast<std::uint64_t>(role), slot, extra});
}

RateEstimate monte_carlo_rate(const BlockCsi<double>& csi, const PrecoderSet<double>& precoders, std::size_t k,
                              double sigma2_z, int n_samples, Rng& rng) {
  if (n_samples < 1) throw invalid_argument("monte_carlo_rate: n_samples must be >= 1");
  const CMatrixd r = interference_covariance(csi, precoders, k, sigma2_z);
  const double base = logdet_hpd(r);
  const auto& user = csi.users.at(k);
  const CMatrixd& p = precoders.at(k);
  // Welford accumulation keeps a constant sequence at exactly zero variance.
  double mean = 0;
  double m2 = 0;
  for (int s = 0; s < n_samples; ++s) {
    const CMatrixd hp = sample_posterior(user, rng) * p;
    const double rate = std::max(0.0, logdet_hpd(hermitian_part(r + hp * hp.adjoint())) - base);
    const double delta = rate - mean;
    mean += delta / double(s + 1);
    m2 += delta * (rate - mean);
  }
  RateEstimate out;
  out.mean = mean;
  out.std_error = n_samples > 1 ? std::sqrt(m2 / double(n_samples - 1) / double(n_samples)) : 0.0;
  return out;
}

RateEstimate monte_carlo_sum_rate(const BlockCsi<double>& csi, const PrecoderSet<double>& precoders,
                                  const std::vector<double>& weights, double sigma2_z, int n_samples, Rng& rng) {
  RateEstimate out;
  double var = 0;
  for (std::size_t k = 0; k < csi.num_users(); ++k) {
    if (weights.at(k) == 0) continue;
    const RateEstimate e = monte_carlo_rate(csi, precoders, k, sigma2_z, n_samples, rng);
    out.mean += weights[k] * e.mean;
    var += weights[k] * weights[k] * e.std_error * e.std_error;
  }
  out.std_error = std::sqrt(var);
  return out;
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kAlg1: return "alg1";
    case Algorithm::kAlg2: return "alg2";
    case Algorithm::kAlg3: return "alg3";
    case Algorithm::kRzf: return "rzf";
    case Algorithm::kSlnr: return "slnr";
    case Algorithm::kWmmse: return "wmmse";
    case Algorithm::kRobustRzf: return "robust-rzf";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  for (Algorithm a : {Algorithm::kAlg1, Algorithm::kAlg2, Algorithm::kAlg3, Algorithm::kRzf, Algorithm::kSlnr,
                      Algorithm::kWmmse, Algorithm::kRobustRzf})
    if (algorithm_name(a) == name) return a;
  throw config_error("algorithms: unknown algorithm '" + name + "'");
}

std::vector<Algorithm> parse_algorithm_list(const std::string& comma_list) {
  std::vector<Algorithm> out;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_algorithm(item));
  }
  if (out.empty()) throw config_error("algorithms: empty list");
  return out;
}

double ExperimentResult::average(const std::string& algorithm, double snr_db) const {
  double acc = 0;
  int count = 0;
  for (const auto& r : records) {
    if (r.algorithm == algorithm && r.snr_db == snr_db) {
      acc += r.sum_rate;
      ++count;
    }
  }
  if (count == 0) throw invalid_argument("no records for " + algorithm);
  return acc / count;
}

void ExperimentResult::append(const ExperimentResult& other) {
  records.insert(records.end(), other.records.begin(), other.records.end());
  failures.insert(failures.end(), other.failures.begin(), other.failures.end());
}

SlotDraw draw_slot(const SystemConfig& cfg, const GeneratorProfile& profile, int slot) {
  SlotDraw d;
  Rng stats_rng = stream(cfg.seed, Stream::kStats, std::uint64_t(slot));
  d.stats = generate_synthetic_stats<double>(cfg, profile, stats_rng);
  const DftMatrix<double> dft(cfg.num_tx);
  Rng channel_rng = stream(cfg.seed, Stream::kChannel, std::uint64_t(slot));
  d.channels = evolve_slot(d.stats, dft, cfg.blocks_per_slot, channel_rng);
  d.pilots = build_orthogonal_pilots<double>(cfg);
  Rng noise_rng = stream(cfg.seed, Stream::kPilotNoise, std::uint64_t(slot));
  d.observation = simulate_uplink_observation(d.channels, d.pilots, cfg.sigma2_bs, noise_rng);
  return d;
}

namespace {

std::vector<UserStatistics<double>> with_alpha(std::vector<UserStatistics<double>> stats,
                                               const std::optional<std::vector<double>>& alpha) {
  if (!alpha) return stats;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const double a = alpha->size() == 1 ? alpha->front() : alpha->at(k);
    if (!(a >= 0 && a <= 1)) throw config_error("assumed_alpha: value outside [0, 1]");
    stats[k].alpha = a;
  }
  return stats;
}

std::vector<CMatrixd> block_one_channels(const SlotDraw& d) {
  std::vector<CMatrixd> out;
  for (const auto& h : d.channels.H) out.push_back(h.front());
  return out;
}

/// Initial precoders for the first data block.
PrecoderSet<double> initial_precoders(const SystemConfig& cfg, const ExperimentPlan& plan, const SlotDraw& d,
                                      int slot) {
  if (plan.init == InitPolicy::kRzf) return rzf(baseline_input(block_one_channels(d), cfg));
  Rng rng = stream(cfg.seed, Stream::kInit, std::uint64_t(slot));
  return random_precoders<double>(cfg, rng);
}

MMOptions with_iterations(MMOptions o, int iterations) {
  o.iterations = iterations;
  return o;
}

}  // namespace

ExperimentResult run_slot_experiment(const SystemConfig& cfg, const GeneratorProfile& profile,
                                     const ExperimentPlan& plan, double snr_db,
                                     const std::optional<std::vector<double>>& design_alpha) {
  cfg.validate();
  profile.validate(cfg);
  if (plan.slots < 1) throw config_error("slots: must be >= 1");
  if (plan.mc_samples < 1) throw config_error("mc_samples: must be >= 1");
  ExperimentResult result;
  const auto dft = make_dft<double>(cfg.num_tx);
  const int blocks = cfg.blocks_per_slot;
  for (int slot = 0; slot < plan.slots; ++slot) {
    const SlotDraw d = draw_slot(cfg, profile, slot);
    const auto truth = build_posterior(d.observation, d.pilots, d.stats, dft, cfg.sigma2_bs, blocks);
    const auto design_stats = with_alpha(d.stats, design_alpha);
    const auto design = build_posterior(d.observation, d.pilots, design_stats, dft, cfg.sigma2_bs, blocks);

    for (Algorithm alg : plan.algorithms) {
      const std::string name = algorithm_name(alg);
      try {
        std::vector<ExperimentRecord> rows;
        PrecoderSet<double> fixed;  // designs that do not change across blocks
        PrecoderSet<double> previous;
        for (int n = 2; n <= blocks; ++n) {
          PrecoderSet<double> p;
          switch (alg) {
            case Algorithm::kAlg1:
            case Algorithm::kAlg2: {
              const PrecoderSet<double> init = previous.empty() ? initial_precoders(cfg, plan, d, slot) : previous;
              const auto variant = alg == Algorithm::kAlg1 ? MMVariant::kMinorizerG1 : MMVariant::kMinorizerG2;
              p = run_mm(design.block_csi(n), cfg, init, variant, plan.mm).precoders;
              break;
            }
            case Algorithm::kAlg3:
              if (fixed.empty())
                fixed = algorithm3(design_stats, cfg, with_iterations(plan.mm, plan.alg3_iterations))
                            .allocation.precoders(*dft);
              p = fixed;
              break;
            case Algorithm::kRzf:
              if (fixed.empty()) fixed = rzf(baseline_input(block_one_channels(d), cfg));
              p = fixed;
              break;
            case Algorithm::kSlnr:
              if (fixed.empty()) fixed = slnr(baseline_input(block_one_channels(d), cfg));
              p = fixed;
              break;
            case Algorithm::kWmmse:
              if (fixed.empty()) {
                const auto in = baseline_input(block_one_channels(d), cfg);
                fixed = wmmse(in, cfg.weights, initial_precoders(cfg, plan, d, slot),
                              with_iterations(plan.mm, plan.wmmse_iterations))
                            .precoders;
              }
              p = fixed;
              break;
            case Algorithm::kRobustRzf:
              p = robust_rzf(design.block_csi(n), cfg, plan.robust_load_scale);
              break;
          }
          previous = p;
          Rng score_rng = stream(cfg.seed, Stream::kScore, std::uint64_t(slot), std::uint64_t(n));
          const RateEstimate e =
              monte_carlo_sum_rate(truth.block_csi(n), p, cfg.weights, cfg.sigma2_z, plan.mc_samples, score_rng);
          ExperimentRecord rec;
          rec.snr_db = snr_db;
          rec.algorithm = name;
          rec.slot = slot;
          rec.block = n;
          rec.sum_rate = e.mean;
          rec.std_error = e.std_error;
          rec.seed = cfg.seed;
          if (design_alpha && design_alpha->size() == 1) rec.assumed_alpha = design_alpha->front();
          rows.push_back(rec);
        }
        result.records.insert(result.records.end(), rows.begin(), rows.end());
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumerical) throw;
        result.failures.push_back("slot " + std::to_string(slot) + " " + name + ": " + e.what());
      }
    }
  }
  return result;
}

ExperimentResult sweep_snr(const SystemConfig& cfg, const GeneratorProfile& profile, const ExperimentPlan& plan,
                           const std::vector<double>& snr_list) {
  ExperimentResult out;
  for (double snr : snr_list) out.append(run_slot_experiment(cfg.at_snr(snr), profile, plan, snr));
  return out;
}

ExperimentResult alpha_mismatch_study(const SystemConfig& cfg, const GeneratorProfile& profile,
                                      const ExperimentPlan& plan, const std::vector<double>& assumed_alphas,
                                      double snr_db) {
  ExperimentResult out;
  const SystemConfig at = cfg.at_snr(snr_db);
  for (double a : assumed_alphas)
    out.append(run_slot_experiment(at, profile, plan, snr_db, std::vector<double>{a}));
  return out;
}

std::vector<ConvergenceTrace> convergence_study(const SystemConfig& cfg_in, const GeneratorProfile& profile,
                                                const ExperimentPlan& plan, double snr_db) {
  const SystemConfig cfg = cfg_in.at_snr(snr_db);
  cfg.validate();
  profile.validate(cfg);
  const int n = plan.convergence_block;
  if (n < 2 || n > cfg.blocks_per_slot) throw config_error("convergence_block: must lie in 2..blocks_per_slot");
  const auto dft = make_dft<double>(cfg.num_tx);
  const SlotDraw d = draw_slot(cfg, profile, 0);
  const auto post = build_posterior(d.observation, d.pilots, d.stats, dft, cfg.sigma2_bs, cfg.blocks_per_slot);
  MMOptions opts = with_iterations(plan.mm, plan.convergence_iterations);
  opts.early_exit_rel = 0;
  std::vector<ConvergenceTrace> out;
  for (Algorithm alg : plan.algorithms) {
    ConvergenceTrace t;
    t.algorithm = algorithm_name(alg);
    switch (alg) {
      case Algorithm::kAlg1:
      case Algorithm::kAlg2: {
        const auto variant = alg == Algorithm::kAlg1 ? MMVariant::kMinorizerG1 : MMVariant::kMinorizerG2;
        t.report = run_mm(post.block_csi(n), cfg, initial_precoders(cfg, plan, d, 0), variant, opts).report;
        break;
      }
      case Algorithm::kAlg3:
        t.report = algorithm3(d.stats, cfg, opts).report.mm;
        break;
      case Algorithm::kWmmse: {
        const auto in = baseline_input(block_one_channels(d), cfg);
        const auto res = wmmse(in, cfg.weights, initial_precoders(cfg, plan, d, 0), opts);
        t.report.objective = res.report.sum_rate;
        t.report.mu = res.report.mu;
        t.report.power = res.report.power;
        t.report.iterations = res.report.iterations;
        break;
      }
      default:
        continue;  // closed-form designs have no trace
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw config_error("algorithms: none of the selected algorithms is iterative");
  return out;
}

}  // namespace robprec
