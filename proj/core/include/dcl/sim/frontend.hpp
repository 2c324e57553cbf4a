#pragma once

#include <optional>
#include <vector>

#include "dcl/pose.hpp"
#include "dcl/rng.hpp"
#include "dcl/sim/world.hpp"

namespace dcl::sim {

struct OdometryNoise {
  double trans_sigma_per_m = 0.02;   // random-walk translation drift
  double rot_sigma_per_rad = 0.02;   // random-walk rotation drift
  double rot_sigma_per_m = 0.002;    // heading walk accumulated with distance
  double yaw_bias_rate = 0.0;        // rad per second, deterministic

  void validate() const;
};

/// 10 Hz true poses for one robot. Piecewise: straight segments between
/// waypoints, turn-in-place at corners.
std::vector<Pose> waypoint_trajectory(const std::vector<Vec3>& waypoints,
                                      double speed, double yaw_rate,
                                      double dt);

double trajectory_length(const std::vector<Pose>& traj);

/// Drifting odometry over a true trajectory: each step measurement is the
/// true relative pose composed with sampled noise plus the deterministic
/// yaw-rate bias. Deterministic in the seed.
struct OdometryStep {
  Pose measurement;  // noisy relative pose
  Mat6 covariance;   // step covariance of the sampled noise model
};

class DriftingOdometry {
 public:
  DriftingOdometry(const OdometryNoise& noise, double dt, std::uint64_t seed);

  /// Consumes one step; returns the noisy relative measurement and keeps the
  /// integrated odometry pose.
  OdometryStep step(const Pose& true_prev, const Pose& true_cur);
  const Pose& pose() const { return pose_; }

 private:
  OdometryNoise noise_;
  double dt_;
  Rng rng_;
  Pose pose_;
};

}  // namespace dcl::sim
