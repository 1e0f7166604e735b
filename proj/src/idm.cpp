#include "mergeflow/idm.hpp"

#include <cmath>
#include <stdexcept>

namespace mergeflow {

void IdmParams::validate() const {
  if (desired_speed <= 0 || time_headway <= 0 || min_gap <= 0 ||
      max_accel <= 0 || comfortable_decel <= 0) {
    throw std::invalid_argument("IdmParams: all parameters must be positive");
  }
  if (exponent < 1.0) {
    throw std::invalid_argument("IdmParams: exponent must be >= 1");
  }
}

double idm_accel(double ego_speed, double leader_gap, double leader_speed,
                 const IdmParams& p) {
  if (std::isfinite(leader_gap) && leader_gap <= 0.0) {
    throw std::domain_error("idm_accel: non-positive gap with a leader present");
  }
  const double free_term = std::pow(ego_speed / p.desired_speed, p.exponent);
  double interaction = 0.0;
  if (std::isfinite(leader_gap)) {
    const double dv = ego_speed - leader_speed;
    const double s_star =
        p.min_gap +
        std::max(0.0, ego_speed * p.time_headway +
                          ego_speed * dv /
                              (2.0 * std::sqrt(p.max_accel * p.comfortable_decel)));
    const double ratio = s_star / leader_gap;
    interaction = ratio * ratio;
  }
  return p.max_accel * (1.0 - free_term - interaction);
}

}  // namespace mergeflow
