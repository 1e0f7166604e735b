#pragma once

#include <limits>

namespace mergeflow {

// Intelligent Driver Model parameters. Defaults match the canonical values
// used across the simulator; desired_speed is overridden per vehicle.
struct IdmParams {
  double desired_speed = 10.0;     // v0, m/s
  double time_headway = 1.5;       // s
  double min_gap = 2.0;            // s0, m
  double max_accel = 2.5;          // a, m/s^2
  double comfortable_decel = 2.0;  // b, m/s^2
  double exponent = 4.0;           // delta

  void validate() const;
  IdmParams with_desired_speed(double v0) const {
    IdmParams p = *this;
    p.desired_speed = v0;
    return p;
  }
};

// Sentinel gap meaning "no leader".
inline constexpr double kNoLeader = std::numeric_limits<double>::infinity();

// Car-following acceleration. leader_gap is the bumper-to-bumper distance;
// pass kNoLeader when the lane ahead is empty (leader_speed ignored).
// Throws if a leader is present at a non-positive gap, which would mean the
// caller is querying a collision state.
double idm_accel(double ego_speed, double leader_gap, double leader_speed,
                 const IdmParams& params);

}  // namespace mergeflow
