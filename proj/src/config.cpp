// SPDX-License-Identifier: Apache-2.0

#include "robprec/config.hpp"

#include "robprec/linalg.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace robprec {

int SystemConfig::total_rx() const { return std::accumulate(rx_antennas.begin(), rx_antennas.end(), 0); }

void SystemConfig::validate() const {
  if (num_tx < 1) throw config_error("num_tx: must be >= 1");
  if (num_users < 1) throw config_error("num_users: must be >= 1");
  if (int(rx_antennas.size()) != num_users) throw config_error("rx_antennas: expected one entry per user");
  if (int(streams.size()) != num_users) throw config_error("streams: expected one entry per user");
  if (int(weights.size()) != num_users) throw config_error("weights: expected one entry per user");
  for (int k = 0; k < num_users; ++k) {
    if (rx_antennas[k] < 1) throw config_error("rx_antennas: entries must be >= 1");
    if (streams[k] < 1 || streams[k] > std::min(rx_antennas[k], num_tx))
      throw config_error("streams: need 1 <= d_k <= min(M_k, M_t)");
    if (!(weights[k] >= 0) || !std::isfinite(weights[k])) throw config_error("weights: entries must be >= 0");
  }
  if (blocks_per_slot < 1) throw config_error("blocks_per_slot: must be >= 1");
  if (block_length < 1) throw config_error("block_length: must be >= 1");
  if (total_rx() > block_length) throw config_error("pilot capacity exceeded");
  if (!(total_power > 0) || !std::isfinite(total_power)) throw config_error("total_power: must be > 0");
  if (!(sigma2_z > 0) || !std::isfinite(sigma2_z)) throw config_error("sigma2_z: must be > 0");
  if (!(sigma2_bs >= 0) || !std::isfinite(sigma2_bs)) throw config_error("sigma2_bs: must be >= 0");
  for (double s : snr_db)
    if (!std::isfinite(s)) throw config_error("snr_db: entries must be finite");
}

SystemConfig SystemConfig::at_snr(double snr_db_value) const {
  SystemConfig out = *this;
  out.sigma2_z = std::pow(10.0, -snr_db_value / 10.0);
  if (tie_uplink_noise) out.sigma2_bs = out.sigma2_z;
  return out;
}

SystemConfig SystemConfig::uniform(int num_tx, int num_users, int rx, int blocks) {
  SystemConfig cfg;
  cfg.num_tx = num_tx;
  cfg.num_users = num_users;
  cfg.rx_antennas.assign(num_users, rx);
  cfg.streams.assign(num_users, rx);
  cfg.weights.assign(num_users, 1.0);
  cfg.blocks_per_slot = blocks;
  cfg.block_length = std::max(num_users * rx, 1);
  return cfg;
}

GeneratorProfile GeneratorProfile::uniform(int num_users, int band_width, double alpha) {
  GeneratorProfile p;
  p.band_width.assign(num_users, band_width);
  p.band_start.assign(num_users, -1);
  p.alpha.assign(num_users, alpha);
  return p;
}

void GeneratorProfile::validate(const SystemConfig& cfg) const {
  if (int(band_width.size()) != cfg.num_users) throw config_error("band_width: expected one entry per user");
  for (int w : band_width)
    if (w < 1 || w > cfg.num_tx) throw config_error("band_width: invalid profile");
  if (!band_start.empty() && int(band_start.size()) != cfg.num_users)
    throw config_error("band_start: expected one entry per user");
  for (int s : band_start)
    if (s >= cfg.num_tx) throw config_error("band_start: beyond the last beam");
  if (!(decay_db_per_beam >= 0)) throw config_error("decay_db_per_beam: must be >= 0");
  if (!(lognormal_sigma_db >= 0)) throw config_error("lognormal_sigma_db: must be >= 0");
  if (int(alpha.size()) != cfg.num_users) throw config_error("alpha: expected one entry per user");
  for (double a : alpha)
    if (!(a >= 0 && a <= 1)) throw config_error("alpha: entries must lie in [0, 1]");
}

}  // namespace robprec
