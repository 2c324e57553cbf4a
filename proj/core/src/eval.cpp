#include "dcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace dcl {
namespace {

Pose fit_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= static_cast<double>(src.size());
  mu_d /= static_cast<double>(src.size());
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cov += (dst[i] - mu_d) * (src[i] - mu_s).transpose();
  }
  Pose t;
  t.rotation = kabsch_rotation(cov);
  t.translation = mu_d - t.rotation * mu_s;
  return t;
}

}  // namespace

Trajectory align_trajectories(const Trajectory& estimate,
                              const Trajectory& ground_truth,
                              int anchor_robot) {
  std::vector<Vec3> src, dst;
  for (const auto& [key, pose] : estimate) {
    if (key.robot_id != anchor_robot) continue;
    auto it = ground_truth.find(key);
    if (it == ground_truth.end()) continue;
    src.push_back(pose.translation);
    dst.push_back(it->second.translation);
  }
  if (src.size() < 3) {
    fail(ErrorCode::Config,
         "align_trajectories: need >= 3 matched anchor poses");
  }
  const Pose t = fit_rigid(src, dst);
  Trajectory aligned;
  for (const auto& [key, pose] : estimate) {
    aligned[key] = compose(t, pose);
  }
  return aligned;
}

namespace {

double rmse_translation(const Trajectory& aligned, const Trajectory& gt,
                        int robot) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [key, pose] : aligned) {
    if (robot >= 0 && key.robot_id != robot) continue;
    auto it = gt.find(key);
    if (it == gt.end()) continue;
    sum += (pose.translation - it->second.translation).squaredNorm();
    ++n;
  }
  if (n == 0) {
    fail(ErrorCode::Config, "compute_ate: no matched poses");
  }
  return std::sqrt(sum / n);
}

double rmse_rotation_deg(const Trajectory& aligned, const Trajectory& gt,
                         int robot) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [key, pose] : aligned) {
    if (robot >= 0 && key.robot_id != robot) continue;
    auto it = gt.find(key);
    if (it == gt.end()) continue;
    const double a = rotation_distance(pose.rotation, it->second.rotation);
    sum += a * a;
    ++n;
  }
  if (n == 0) {
    fail(ErrorCode::Config, "compute_are: no matched poses");
  }
  return std::sqrt(sum / n) * 180.0 / M_PI;
}

}  // namespace

double compute_ate(const Trajectory& aligned, const Trajectory& gt) {
  return rmse_translation(aligned, gt, -1);
}

double compute_are(const Trajectory& aligned, const Trajectory& gt) {
  return rmse_rotation_deg(aligned, gt, -1);
}

double compute_ate_robot(const Trajectory& aligned, const Trajectory& gt,
                         int robot) {
  return rmse_translation(aligned, gt, robot);
}

double compute_are_robot(const Trajectory& aligned, const Trajectory& gt,
                         int robot) {
  return rmse_rotation_deg(aligned, gt, robot);
}

std::vector<PrSample> pr_curve(const std::vector<CandidateAudit>& candidates,
                               const std::map<PoseKey, Vec3>& true_positions,
                               double success_radius, int steps) {
  // Best (smallest-distance) candidate per query.
  std::map<PoseKey, CandidateAudit> best;
  for (const CandidateAudit& c : candidates) {
    auto it = best.find(c.query);
    if (it == best.end() || c.distance < it->second.distance) {
      best[c.query] = c;
    }
  }
  // A query is an opportunity if any in-radius partner existed at all; the
  // candidate stream only carries evaluated pairs, so opportunities are
  // queries with a ground-truth-successful best OR any candidate whose true
  // distance is within the radius.
  std::map<PoseKey, bool> opportunity;
  for (const CandidateAudit& c : candidates) {
    auto qa = true_positions.find(c.query);
    auto ma = true_positions.find(c.match);
    if (qa == true_positions.end() || ma == true_positions.end()) continue;
    const bool hit = (qa->second - ma->second).norm() <= success_radius;
    auto [it, inserted] = opportunity.emplace(c.query, hit);
    if (!inserted) it->second = it->second || hit;
  }
  int total_opportunities = 0;
  for (const auto& [key, hit] : opportunity) {
    if (hit) ++total_opportunities;
  }
  std::vector<PrSample> out;
  for (int s = 0; s < steps; ++s) {
    const double eta = static_cast<double>(s) / (steps - 1);
    int reported = 0;
    int correct = 0;
    for (const auto& [key, cand] : best) {
      if (cand.distance >= eta) continue;
      auto qa = true_positions.find(cand.query);
      auto ma = true_positions.find(cand.match);
      if (qa == true_positions.end() || ma == true_positions.end()) continue;
      ++reported;
      if ((qa->second - ma->second).norm() <= success_radius) {
        ++correct;
      }
    }
    PrSample sample;
    sample.threshold = eta;
    sample.reported = reported;
    sample.correct = correct;
    sample.precision = reported > 0 ? static_cast<double>(correct) / reported
                                    : 1.0;
    sample.recall = total_opportunities > 0
                        ? static_cast<double>(correct) / total_opportunities
                        : 0.0;
    out.push_back(sample);
  }
  return out;
}

void write_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  j["robots"] = nlohmann::json::array();
  for (const RobotEval& r : report.robots) {
    j["robots"].push_back({{"robot", r.robot},
                           {"ate_m", r.ate},
                           {"are_deg", r.are_deg},
                           {"odometry_ate_m", r.odometry_ate}});
  }
  j["loops"] = {{"inter_candidates", report.inter_candidates},
                {"inter_verified", report.inter_verified},
                {"pcm_accepted", report.pcm_accepted},
                {"intra_loops", report.intra_loops}};
  j["pr"] = nlohmann::json::array();
  for (const PrSample& s : report.pr) {
    j["pr"].push_back({{"threshold", s.threshold},
                       {"precision", s.precision},
                       {"recall", s.recall},
                       {"reported", s.reported},
                       {"correct", s.correct}});
  }
  for (const auto& [key, value] : report.extras) {
    j["extras"][key] = value;
  }
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::Io, "write_report_json: cannot open " + path);
  }
  out << j.dump(2) << '\n';
}

}  // namespace dcl
