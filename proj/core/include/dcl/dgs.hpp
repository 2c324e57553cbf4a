#pragma once

#include <Eigen/Sparse>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dcl/network.hpp"
#include "dcl/pcm.hpp"
#include "dcl/pose.hpp"

namespace dcl {

struct DgsConfig {
  int max_outer_iterations = 100;
  double rotation_tol = 1e-5;  // relaxed-rotation change norm per sweep
  double pose_tol = 1e-4;      // correction change norm per sweep, meters
  int max_inner_sweeps = 50;   // per stage, per outer round
  bool enable_pcm = true;
  PcmConfig pcm;
  double ghost_prior_weight = 2.0;  // remote-separator soft prior
  int barrier_timeout_sweeps = 50;
  double divergence_growth = 10.0;
  int divergence_window = 5;
  int max_consecutive_aborts = 3;

  void validate() const;
};

/// Robots of the inter-factor connected component containing local_robot,
/// ascending by id. [local_robot] when it has no inter factors.
std::vector<int> compute_optimization_order(const std::vector<Factor>& inter,
                                            int local_robot);

/// One robot's share of the two-stage solve: a chordal-relaxation
/// Gauss-Seidel pass over the local rotations, then one Gauss-Newton
/// linearization swept over local 6-dof corrections. Neighbor separator
/// state arrives through the set_neighbor_* calls.
class RobotSolver {
 public:
  /// Gauge handling per stage solve. Hard removes the first pose from the
  /// unknowns (single-robot blocks). Free keeps every pose a variable; the
  /// inter-robot loop terms ground the block and the gauge is fixed after
  /// stage convergence with an exact null-space correction broadcast by the
  /// sub-component's anchor robot.
  enum class Gauge { Hard, Free };

  RobotSolver(int robot_id, const PoseGraph& local,
              const std::map<PoseKey, Pose>& initial, Gauge gauge,
              double ghost_prior_weight = 2.0);

  int robot() const { return robot_; }
  std::set<int> neighbor_robots() const;
  /// Local poses referenced by inter factors shared with peer.
  std::vector<PoseKey> separators_for(int peer) const;

  void set_neighbor_pose(const PoseKey& key, const Pose& pose);
  void set_neighbor_rotation(const PoseKey& key, const Mat3& relaxed);
  void set_neighbor_correction(const PoseKey& key, const Vec6& correction);

  void begin_rotation_stage();
  /// One in-order Gauss-Seidel sweep; returns the change norm. Throws
  /// NoAnchor when the block has neither an anchor nor neighbor coupling.
  double rotation_sweep();
  /// Exact local block solve given the latest neighbor values (the sparse
  /// factorization is reused across rounds; only the right-hand side moves).
  double rotation_round();
  void finish_rotation_stage();
  Mat3 relaxed_rotation(const PoseKey& key) const;

  /// Left gauge transform returning the anchor pose's relaxed rotation to
  /// target; applied by every member of the sub-component.
  Mat3 rotation_gauge(const PoseKey& anchor_key, const Mat3& target) const;
  void apply_rotation_gauge(const Mat3& g);

  void begin_pose_stage();
  double pose_sweep();
  double pose_round();
  void finish_pose_stage();
  Vec6 correction(const PoseKey& key) const;

  /// Gauge element (g_r, g_t) zeroing the anchor pose's correction.
  Vec6 pose_gauge(const PoseKey& anchor_key) const;
  void apply_pose_gauge(const Vec6& g);

  PoseKey first_key() const { return keys_.front(); }

  std::map<PoseKey, Pose> estimates() const;
  const std::map<PoseKey, Pose>& neighbor_poses() const {
    return neighbor_pose_;
  }

 private:
  struct FactorRef;
  int local_index(const PoseKey& key) const;

  int robot_;
  Gauge gauge_;
  int anchor_index_ = -1;
  std::vector<PoseKey> keys_;          // ascending frame order
  std::map<PoseKey, int> index_;
  std::vector<Pose> estimate_;
  std::vector<Factor> factors_;        // local + boundary copies
  std::vector<std::vector<int>> incident_;  // factor indices per local pose
  std::map<PoseKey, Pose> neighbor_pose_;
  // rotation stage
  std::vector<Mat3> relaxed_;
  std::map<PoseKey, Mat3> neighbor_relaxed_;
  // pose stage
  std::vector<Pose> lin_point_;
  std::map<PoseKey, Pose> neighbor_lin_;
  std::vector<Mat6> h_diag_inv_;
  std::vector<Vec6> b_;
  struct Coupling {
    int pose = 0;          // local pose row
    int other_local = -1;  // local column, or -1 when remote
    PoseKey other_key;     // remote column key (unused when local)
    Mat6 h;
  };
  std::vector<Coupling> couplings_;
  std::vector<Vec6> delta_;
  std::map<PoseKey, Vec6> neighbor_delta_;
  // cached direct solvers for the block rounds
  using SparseSolver = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>;
  int free_count(int index) const;  // unknown slot, anchor excluded
  // Remote separator poses solved as ghost variables with a weak prior on
  // the last received value: overlapping blocks contract at odometry scale
  // instead of loop scale, with the same fixed point.
  std::vector<PoseKey> ghost_keys_;
  std::map<PoseKey, int> ghost_index_;
  double ghost_weight_ = 100.0;
  int ghost_slot(const PoseKey& key) const;  // unknown slot after own poses
  std::unique_ptr<SparseSolver> rot_solver_;
  std::unique_ptr<SparseSolver> pose_solver_;
  std::vector<Mat3> ghost_relaxed_;  // solved ghost rotations
  std::vector<Vec6> ghost_delta_;    // solved ghost corrections
  Eigen::VectorXd pose_b_const_;     // residual part of the pose-stage rhs
};

struct RobotGraph {
  int robot_id = 0;
  PoseGraph graph;  // nodes hold the current estimates
};

struct PgoRoundLog {
  int round = 0;
  std::string stage;
  int sweeps = 0;
  double change = 0.0;
  double cost = 0.0;
};

struct PgoResult {
  std::map<PoseKey, Pose> estimates;
  std::vector<PgoRoundLog> log;
  std::vector<Factor> accepted_inter;
  int rounds = 0;
  bool converged = false;
  bool aborted = false;
  bool pcm_exact = true;
};

/// Algorithm-1 orchestration: start-flag handshake with initialization,
/// per-round PCM filtering, rotation stage to convergence, barrier, pose
/// stage to convergence. All inter-robot exchange goes through net and is
/// byte accounted. Throws Diverged when corrections blow up.
PgoResult run_distributed_pgo(const std::vector<RobotGraph>& robots,
                              const DgsConfig& cfg, Network& net);

struct OracleConfig {
  bool full_gauss_newton = false;
  int max_iterations = 30;
  double tol = 1e-12;
};

/// Same two-stage math solved centrally with sparse direct linear algebra:
/// chordal initialization then one Gauss-Newton step by default. nodes of
/// the merged graph supply the initial estimates.
std::map<PoseKey, Pose> centralized_pgo_oracle(const PoseGraph& merged,
                                               const OracleConfig& cfg = {});

/// Negative log-likelihood style objective: 1/2 sum r^T Omega r over all
/// factors, evaluated at the given estimates.
double pose_graph_cost(const PoseGraph& graph,
                       const std::map<PoseKey, Pose>& estimates);

/// Union of per-robot partitions; duplicated inter-factor copies collapse to
/// one occurrence.
PoseGraph merge_robot_graphs(const std::vector<RobotGraph>& robots);

/// Odometry chains per robot, for PCM.
std::map<int, OdometryChain> odometry_chains(
    const std::vector<RobotGraph>& robots);

}  // namespace dcl
