// SPDX-License-Identifier: Apache-2.0
//
// Monte Carlo rate scoring and the slot experiment protocol: statistics and a
// slot of aged channels are drawn, the block-1 pilots give the posterior, each
// data block 2..N_b gets a precoder and is scored on the posterior built with
// the true aging coefficient.

#pragma once

#include "robprec/baselines.hpp"
#include "robprec/beam_domain.hpp"
#include "robprec/mm_precoder.hpp"
#include "robprec/posterior.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace robprec {

struct RateEstimate {
  double mean = 0;
  double std_error = 0;
};

/// Sample mean of logdet(I + R^{-1} H P P^H H^H) over posterior draws of user
/// k's channel; R is the closed-form interference-plus-noise covariance.
RateEstimate monte_carlo_rate(const BlockCsi<double>& csi, const PrecoderSet<double>& precoders, std::size_t k,
                              double sigma2_z, int n_samples, Rng& rng);

/// Weighted sum of monte_carlo_rate over users, drawing users in order from
/// one stream. The standard errors combine as independent.
RateEstimate monte_carlo_sum_rate(const BlockCsi<double>& csi, const PrecoderSet<double>& precoders,
                                  const std::vector<double>& weights, double sigma2_z, int n_samples, Rng& rng);

enum class Algorithm { kAlg1, kAlg2, kAlg3, kRzf, kSlnr, kWmmse, kRobustRzf };

std::string algorithm_name(Algorithm a);
/// Accepts alg1, alg2, alg3, rzf, slnr, wmmse, robust-rzf.
Algorithm parse_algorithm(const std::string& name);
std::vector<Algorithm> parse_algorithm_list(const std::string& comma_list);

/// Starting point of the iterative designs at the first data block.
enum class InitPolicy { kRandom, kRzf };

struct ExperimentPlan {
  int slots = 100;
  int mc_samples = 1000;
  std::vector<Algorithm> algorithms{Algorithm::kAlg1, Algorithm::kRzf};
  MMOptions mm;
  InitPolicy init = InitPolicy::kRandom;
  int alg3_iterations = 100;
  int wmmse_iterations = 30;
  double robust_load_scale = 1.0;
  std::vector<double> assumed_alpha;  // mismatch study only
  int convergence_block = 2;
  int convergence_iterations = 50;
};

struct ExperimentRecord {
  double snr_db = 0;
  std::string algorithm;
  int slot = 0;
  int block = 0;
  double sum_rate = 0;
  double std_error = 0;
  std::uint64_t seed = 0;
  std::optional<double> assumed_alpha;
};

struct ExperimentResult {
  std::vector<ExperimentRecord> records;
  std::vector<std::string> failures;  // one line per skipped (slot, algorithm)

  /// Mean sum-rate of one algorithm at one SNR over all slots and blocks.
  double average(const std::string& algorithm, double snr_db) const;
  void append(const ExperimentResult& other);
};

/// Full slot protocol at the SNR already set in `cfg` (snr label `snr_db`).
/// Every random quantity is drawn from a sub-stream of cfg.seed keyed by its
/// role and slot, so algorithms and SNR points share the same draws.
ExperimentResult run_slot_experiment(const SystemConfig& cfg, const GeneratorProfile& profile,
                                     const ExperimentPlan& plan, double snr_db,
                                     const std::optional<std::vector<double>>& design_alpha = std::nullopt);

ExperimentResult sweep_snr(const SystemConfig& cfg, const GeneratorProfile& profile, const ExperimentPlan& plan,
                           const std::vector<double>& snr_list);

/// Channels age with profile.alpha; the transmitter designs with each assumed
/// value in turn (applied to every user). Records carry the assumed value.
ExperimentResult alpha_mismatch_study(const SystemConfig& cfg, const GeneratorProfile& profile,
                                      const ExperimentPlan& plan, const std::vector<double>& assumed_alphas,
                                      double snr_db);

/// Per-iteration trace of one algorithm on block `plan.convergence_block` of
/// slot 0. Closed-form designs in the selection are skipped.
struct ConvergenceTrace {
  std::string algorithm;
  MMReport report;
};

std::vector<ConvergenceTrace> convergence_study(const SystemConfig& cfg, const GeneratorProfile& profile,
                                                const ExperimentPlan& plan, double snr_db);

// Shared pieces of the protocol, exposed for tests.

struct SlotDraw {
  std::vector<UserStatistics<double>> stats;
  TrueChannelSlot<double> channels;
  CMatrixd observation;
  std::vector<CMatrixd> pilots;
};

/// Statistics, channels and the uplink observation of slot `slot`.
SlotDraw draw_slot(const SystemConfig& cfg, const GeneratorProfile& profile, int slot);

/// Sub-stream roles.
enum class Stream : std::uint64_t { kStats = 1, kChannel = 2, kPilotNoise = 3, kInit = 4, kScore = 5 };
Rng stream(std::uint64_t seed, Stream role, std::uint64_t slot, std::uint64_t extra = 0);

}  // namespace robprec
