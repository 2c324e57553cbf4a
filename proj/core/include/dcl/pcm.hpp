#pragma once

#include <map>
#include <string>
#include <vector>

#include "dcl/pose.hpp"

namespace dcl {

/// One robot's odometry chain with O(1) composed relative pose and
/// covariance between any two keyframes. Step covariances are accumulated
/// additively (adjoints approximated at identity).
class OdometryChain {
 public:
  OdometryChain() = default;
  explicit OdometryChain(const std::vector<Factor>& odometry);

  Pose segment(int from_frame, int to_frame) const;
  Mat6 segment_covariance(int from_frame, int to_frame) const;
  int min_frame() const { return min_frame_; }
  int max_frame() const {
    return min_frame_ + static_cast<int>(prefix_pose_.size()) - 1;
  }

 private:
  int min_frame_ = 0;
  std::vector<Pose> prefix_pose_;  // pose of frame i relative to first frame
  std::vector<Mat6> prefix_cov_;   // accumulated covariance up to frame i
};

struct PcmConfig {
  double epsilon = 5.348;  // chi-square threshold, 6 dof
  bool weighted = true;    // Mahalanobis norm; false gives the plain squared norm
  int exact_max_nodes = 500;
};

/// Eq-8 style pairwise consistency statistic for two inter-robot loops of the
/// same robot pair. Throws MixedPair otherwise.
double pairwise_residual(const Factor& loop1, const Factor& loop2,
                         const OdometryChain& chain_a,
                         const OdometryChain& chain_b, bool weighted = true);

struct ConsistencyGraph {
  std::vector<Factor> loops;
  std::vector<std::vector<char>> adjacency;  // symmetric, true diagonal
  std::vector<std::vector<double>> residuals;
};

/// Graph for one robot pair; chains keyed by robot id must contain both
/// endpoints' odometry.
ConsistencyGraph build_consistency_graph(
    const std::vector<Factor>& loops,
    const std::map<int, OdometryChain>& odometry, const PcmConfig& cfg = {});

struct MaxCliqueResult {
  std::vector<int> members;  // ascending
  bool exact = true;
};

/// Exact maximum clique (Bron-Kerbosch with pivoting) up to
/// exact_max_nodes nodes, greedy degeneracy heuristic beyond. Ties resolve
/// to the lexicographically smallest member set.
MaxCliqueResult max_clique(const std::vector<std::vector<char>>& adjacency,
                           int exact_max_nodes = 500);

struct PcmLoopAudit {
  Factor loop;
  int partners = 0;
  int consistent = 0;
  double min_residual = 0.0;
  bool accepted = false;
};

struct PcmResult {
  std::vector<Factor> accepted;
  std::vector<PcmLoopAudit> audit;
  bool exact = true;
};

/// Per robot pair: consistency graph, maximum clique, accept clique members.
/// A loop with no partner forms a 1-clique and passes.
PcmResult filter_inter_loops(const std::vector<Factor>& loops,
                             const std::map<int, OdometryChain>& odometry,
                             const PcmConfig& cfg = {});

void write_pcm_audit(const std::vector<PcmLoopAudit>& audit,
                     const std::string& path);

}  // namespace dcl
