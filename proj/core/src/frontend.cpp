#include "dcl/sim/frontend.hpp"

#include <cmath>

#include "dcl/error.hpp"

namespace dcl::sim {

void OdometryNoise::validate() const {
  if (trans_sigma_per_m < 0 || rot_sigma_per_rad < 0 || rot_sigma_per_m < 0) {
    fail(ErrorCode::Config, "OdometryNoise: sigmas must be non-negative");
  }
}

namespace {

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

}  // namespace

std::vector<Pose> waypoint_trajectory(const std::vector<Vec3>& waypoints,
                                      double speed, double yaw_rate,
                                      double dt) {
  if (waypoints.size() < 2 || speed <= 0 || yaw_rate <= 0 || dt <= 0) {
    fail(ErrorCode::Config, "waypoint_trajectory: invalid parameters");
  }
  std::vector<Pose> traj;
  Vec3 position = waypoints.front();
  double yaw = std::atan2(waypoints[1].y() - position.y(),
                          waypoints[1].x() - position.x());
  traj.push_back(make_pose_rz(yaw, position));
  for (std::size_t w = 1; w < waypoints.size(); ++w) {
    const Vec3 target = waypoints[w];
    const Vec3 to = target - position;
    const double dist = std::hypot(to.x(), to.y());
    if (dist < 1e-9) continue;
    const double heading = std::atan2(to.y(), to.x());
    // Turn in place toward the segment heading.
    double remaining = wrap_angle(heading - yaw);
    const double turn_step = yaw_rate * dt;
    while (std::abs(remaining) > turn_step) {
      yaw = wrap_angle(yaw + (remaining > 0 ? turn_step : -turn_step));
      remaining = wrap_angle(heading - yaw);
      traj.push_back(make_pose_rz(yaw, position));
    }
    yaw = heading;
    // Drive the segment.
    const Vec3 dir = to / dist;
    double travelled = 0.0;
    while (travelled + speed * dt < dist) {
      travelled += speed * dt;
      position = target - dir * (dist - travelled);
      position.z() = target.z();
      traj.push_back(make_pose_rz(yaw, position));
    }
    position = target;
    traj.push_back(make_pose_rz(yaw, position));
  }
  return traj;
}

double trajectory_length(const std::vector<Pose>& traj) {
  double len = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    len += (traj[i].translation - traj[i - 1].translation).norm();
  }
  return len;
}

DriftingOdometry::DriftingOdometry(const OdometryNoise& noise, double dt,
                                   std::uint64_t seed)
    : noise_(noise), dt_(dt), rng_(mix_seed(seed, 0x0D0E)) {
  noise.validate();
  if (dt <= 0) {
    fail(ErrorCode::Config, "DriftingOdometry: dt must be positive");
  }
}

OdometryStep DriftingOdometry::step(const Pose& true_prev,
                                    const Pose& true_cur) {
  const Pose rel = compose(inverse(true_prev), true_cur);
  const double dist = rel.translation.norm();
  const double angle = log_so3(rel.rotation).norm();
  const double var_rot = noise_.rot_sigma_per_rad * noise_.rot_sigma_per_rad *
                             angle +
                         noise_.rot_sigma_per_m * noise_.rot_sigma_per_m * dist;
  const double var_trans =
      noise_.trans_sigma_per_m * noise_.trans_sigma_per_m * dist;
  Vec6 xi = Vec6::Zero();
  const double sd_rot = std::sqrt(var_rot);
  const double sd_trans = std::sqrt(var_trans);
  for (int i = 0; i < 3; ++i) xi(i) = sd_rot * rng_.normal();
  for (int i = 3; i < 6; ++i) xi(i) = sd_trans * rng_.normal();
  xi(2) += noise_.yaw_bias_rate * dt_;
  OdometryStep out;
  out.measurement = compose(rel, exp_map(xi));
  // Variance floors keep stationary-step information finite.
  Mat6 cov = Mat6::Zero();
  const double bias_var =
      noise_.yaw_bias_rate * dt_ * noise_.yaw_bias_rate * dt_;
  for (int i = 0; i < 3; ++i) cov(i, i) = var_rot + 1e-8 + (i == 2 ? bias_var : 0.0);
  for (int i = 3; i < 6; ++i) cov(i, i) = var_trans + 1e-8;
  out.covariance = cov;
  pose_ = compose(pose_, out.measurement);
  return out;
}

}  // namespace dcl::sim
