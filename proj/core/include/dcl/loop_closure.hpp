#pragma once

#include <optional>
#include <vector>

#include "dcl/cloud.hpp"
#include "dcl/iris.hpp"
#include "dcl/kdtree.hpp"
#include "dcl/pose.hpp"

namespace dcl {

struct KeyframeGate {
  double d_min = 1.0;        // meters
  double theta_min = 0.2;    // radians
};

/// True when the relative motion prev^-1 * cur reaches either gate
/// (inclusive thresholds).
bool is_keyframe(const Pose& prev, const Pose& cur,
                 const KeyframeGate& gate = {});

struct KeyframeRecord {
  PoseKey key;
  Pose odom_pose;
  IrisDescriptor descriptor;
  PointCloud filtered_cloud;
  double timestamp = 0.0;
};

/// Exact k-nearest row keys by Euclidean distance, ties broken by lower
/// insertion index. Pure-function form of the database search.
std::vector<int> rowkey_knn(const std::vector<std::vector<double>>& db,
                            const std::vector<double>& query, int k);

struct LoopCandidate {
  PoseKey query;
  PoseKey match;
  double distance = 1.0;
  int shift = 0;
};

struct SearchConfig {
  int k = 10;
  double eta = 0.3;
  int exclusion = 30;  // most recent own keyframes skipped for intra search
};

/// Row-key index over descriptors plus the candidate search. Entries keep
/// insertion order; matches are restricted to locally owned entries since
/// only those have clouds available for verification.
class DescriptorDb {
 public:
  explicit DescriptorDb(int own_robot_id) : own_robot_(own_robot_id) {}

  void insert_own(const PoseKey& key, const IrisDescriptor& descriptor);
  void insert_remote(const PoseKey& key, std::vector<double> row_key);

  /// Closest own entry with iris distance < eta among the k row-key
  /// neighbors. intra=true applies the recency exclusion window.
  std::optional<LoopCandidate> find_candidate(
      const PoseKey& query_key, const IrisDescriptor& query,
      const SearchConfig& cfg, bool intra,
      std::vector<LoopCandidate>* evaluated = nullptr) const;

  std::size_t size() const { return entries_.size(); }
  const IrisDescriptor* own_descriptor(const PoseKey& key) const;

 private:
  struct Entry {
    PoseKey key;
    std::vector<double> row_key;
    IrisDescriptor descriptor;  // empty for remote entries
    bool own = false;
  };

  void maybe_rebuild() const;

  int own_robot_;
  std::vector<Entry> entries_;
  mutable KdTree tree_;
  mutable std::size_t indexed_ = 0;  // entries covered by tree_
};

struct IcpConfig {
  int max_iter = 50;
  double corr_dist = 2.0;  // meters
  double tol = 1e-6;
  int max_source_points = 1500;  // stride subsample above this, 0 = all
};

struct IcpResult {
  Pose transform;          // maps source points into the target frame
  double fitness = 0.0;    // mean inlier residual, meters
  int iterations = 0;
  std::vector<double> objective_log;  // mean squared residual per iteration
};

/// Point-to-point ICP with closed-form rigid fit per iteration. Throws
/// DegenerateGeometry for < 3 or collinear points, NoOverlap when no
/// correspondences fall within corr_dist. target_tree, when given, must
/// index exactly the target cloud.
IcpResult icp_align(const PointCloud& source, const PointCloud& target,
                    const Pose& init, const IcpConfig& cfg = {},
                    const KdTree* target_tree = nullptr);

struct RansacConfig {
  int iters = 200;
  double inlier_dist = 0.5;       // meters
  double min_inlier_ratio = 0.3;
  double pair_dist = 2.0;         // correspondence gate under init
  std::uint64_t seed = 0;
};

struct RansacResult {
  bool pass = false;
  double inlier_ratio = 0.0;
  Pose best_model;
};

RansacResult ransac_verify(const PointCloud& source, const PointCloud& target,
                           const Pose& init, const RansacConfig& cfg = {},
                           const KdTree* target_tree = nullptr);

struct VerifiedLoop {
  LoopCandidate candidate;
  Pose relative_pose;  // maps match keyframe frame into query keyframe frame
  double inlier_ratio = 0.0;
  double fitness = 0.0;
};

struct VerifyConfig {
  IcpConfig icp;
  RansacConfig ransac;
  int n_a = 360;  // descriptor angular bins, for the yaw initialization
  double submap_leaf = 0.4;   // submap re-downsample, 0 disables
  double max_fitness = 0.25;  // ICP mean residual gate, meters
};

/// RANSAC gate then ICP refinement, seeded from the descriptor shift. The
/// source cloud is the matched keyframe's filtered cloud; the target submap
/// must already be expressed in the query keyframe's frame.
std::optional<VerifiedLoop> verify_candidate(const LoopCandidate& cand,
                                             const PointCloud& match_cloud,
                                             const PointCloud& query_submap,
                                             const VerifyConfig& cfg);

/// Union of the keyframe's filtered cloud with its +-half_width neighbors,
/// expressed in the center keyframe's frame via odometry.
PointCloud build_submap(const std::vector<KeyframeRecord>& keyframes,
                        int center_frame, int half_width);

}  // namespace dcl
