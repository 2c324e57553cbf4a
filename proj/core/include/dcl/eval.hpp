#pragma once

#include <map>
#include <string>
#include <vector>

#include "dcl/pose.hpp"
#include "dcl/protocol.hpp"

namespace dcl {

using Trajectory = std::map<PoseKey, Pose>;

/// One rigid transform fit on the anchor robot's matched poses
/// (closed-form, no scale), applied to every robot. Throws with fewer than
/// three matched anchor poses.
Trajectory align_trajectories(const Trajectory& estimate,
                              const Trajectory& ground_truth,
                              int anchor_robot);

/// RMSE of translational errors over matched keys, meters.
double compute_ate(const Trajectory& aligned, const Trajectory& ground_truth);
/// RMSE of geodesic rotation errors over matched keys, degrees.
double compute_are(const Trajectory& aligned, const Trajectory& ground_truth);

double compute_ate_robot(const Trajectory& aligned,
                         const Trajectory& ground_truth, int robot);
double compute_are_robot(const Trajectory& aligned,
                         const Trajectory& ground_truth, int robot);

struct PrSample {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int reported = 0;
  int correct = 0;
};

/// Sweeps the descriptor-distance threshold over [0, 1]. A reported
/// candidate is successful when the true positions of its endpoints are
/// within success_radius. The recall denominator counts queries that had at
/// least one in-radius partner available.
std::vector<PrSample> pr_curve(const std::vector<CandidateAudit>& candidates,
                               const std::map<PoseKey, Vec3>& true_positions,
                               double success_radius = 4.0, int steps = 101);

struct RobotEval {
  int robot = 0;
  double ate = 0.0;
  double are_deg = 0.0;
  double odometry_ate = 0.0;  // per-robot aligned baseline
};

struct EvalReport {
  std::vector<RobotEval> robots;
  int inter_candidates = 0;
  int inter_verified = 0;
  int pcm_accepted = 0;
  int intra_loops = 0;
  std::vector<PrSample> pr;
  std::map<std::string, double> extras;
};

void write_report_json(const EvalReport& report, const std::string& path);

}  // namespace dcl
