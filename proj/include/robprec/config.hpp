// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace robprec {

/// Dimensions, power budget and noise levels of one downlink system.
struct SystemConfig {
  int num_tx = 16;                 // M_t
  int num_users = 4;               // K
  std::vector<int> rx_antennas;    // M_k per user
  std::vector<int> streams;        // d_k per user
  int blocks_per_slot = 7;         // N_b, block 1 carries the uplink pilots
  int block_length = 16;           // T, symbols per block
  double total_power = 1.0;        // P
  std::vector<double> weights;     // w_k
  double sigma2_z = 0.1;           // downlink noise variance
  double sigma2_bs = 0.1;          // uplink noise variance
  bool tie_uplink_noise = true;    // sigma2_bs follows sigma2_z through a sweep
  std::vector<double> snr_db;      // sweep points
  std::uint64_t seed = 1;

  int total_rx() const;
  /// Throws Error(kConfig) naming the offending field.
  void validate() const;
  /// Copy with sigma2_z = 10^(-snr/10) (and sigma2_bs when tied).
  SystemConfig at_snr(double snr_db_value) const;

  /// Uniform config: every user gets `rx` antennas, `rx` streams, unit weight.
  static SystemConfig uniform(int num_tx, int num_users, int rx, int blocks = 7);
};

/// Parameters of the synthetic beam-band statistics generator.
struct GeneratorProfile {
  std::vector<int> band_width;      // active transmit beams per user
  std::vector<int> band_start;      // first beam of the band, -1 draws it at random
  double decay_db_per_beam = 1.0;   // power roll-off away from the band centre
  double lognormal_sigma_db = 2.0;  // per-entry log-normal perturbation
  std::vector<double> alpha;        // temporal correlation per user

  static GeneratorProfile uniform(int num_users, int band_width, double alpha);
  void validate(const SystemConfig& cfg) const;
};

/// Speed of light used by the Jakes coefficient.
inline constexpr double kSpeedOfLight = 299792458.0;

}  // namespace robprec
