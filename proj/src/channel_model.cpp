// SPDX-License-Identifier: Apache-2.0

#include "robprec/channel_model.hpp"

#include <cmath>
#include <numbers>

namespace robprec {

double jakes_alpha(double speed_mps, double carrier_hz, double block_seconds) {
  if (!(speed_mps >= 0) || !(carrier_hz > 0) || !(block_seconds > 0))
    throw invalid_argument("jakes_alpha: need v >= 0, f_c > 0, T > 0");
  const double arg = 2.0 * std::numbers::pi * speed_mps * carrier_hz * block_seconds / kSpeedOfLight;
  const double j0 = std::cyl_bessel_j(0.0, arg);
  return std::clamp(j0, 0.0, 1.0);
}

}  // namespace robprec
