#pragma once

#include <optional>
#include <set>
#include <vector>

#include "dcl/loop_closure.hpp"
#include "dcl/network.hpp"

namespace dcl {

struct ProtocolConfig {
  SearchConfig search;
  VerifyConfig verify;
  // Intra-robot loops skip the PCM gate, so their geometric acceptance is
  // tighter.
  double intra_max_fitness = 0.15;
  double intra_min_inlier_ratio = 0.8;
  int submap_half_width = 5;
  int max_descriptors_per_tick_per_peer = 8;
  bool intra_loops = true;
};

struct LoopStats {
  int descriptors_sent = 0;
  int descriptors_received = 0;
  int inter_candidates = 0;
  int verification_requests = 0;
  int verifications_attempted = 0;
  int verifications_passed = 0;
  int loop_results_received = 0;
  int intra_candidates = 0;
  int intra_verified = 0;
  int unknown_messages = 0;
};

/// One evaluated candidate pairing; feeds the precision-recall sweep.
struct CandidateAudit {
  PoseKey query;
  PoseKey match;
  double distance = 1.0;
  int shift = 0;
  bool inter = true;
};

struct VerifiedLoopRecord {
  PoseKey query;
  PoseKey match;
  double distance = 0.0;
  double inlier_ratio = 0.0;
  double fitness = 0.0;
  bool inter = true;
};

/// One robot's full protocol-facing state: keyframes, descriptor database,
/// pose graph partition and the three-stage exchange bookkeeping.
class RobotNode {
 public:
  RobotNode(int id, const IrisEncoder* encoder, const ProtocolConfig& cfg)
      : id_(id), encoder_(encoder), cfg_(cfg), db_(id) {}

  int id() const { return id_; }

  /// Registers a keyframe produced by the front-end, appends the odometry
  /// factor (null for the first keyframe) and attempts an intra-robot loop.
  void add_keyframe(KeyframeRecord kf, const std::optional<Factor>& odom);

  /// One protocol turn: drains the inbox, advances per-peer descriptor
  /// cursors for peers currently in range, emits stage-2/3 messages.
  void protocol_tick(const std::vector<SwarmMessage>& inbox,
                     const std::vector<int>& peers_in_range, Network& net);

  const std::vector<KeyframeRecord>& keyframes() const { return keyframes_; }
  const PoseGraph& graph() const { return graph_; }
  PoseGraph& graph() { return graph_; }
  const LoopStats& stats() const { return stats_; }
  const std::vector<CandidateAudit>& candidate_log() const {
    return candidate_log_;
  }
  const std::vector<VerifiedLoopRecord>& verified_log() const {
    return verified_log_;
  }
  std::vector<Factor> inter_factors() const;
  const ProtocolConfig& config() const { return cfg_; }

  /// Current trajectory estimate (own poses), updated by the optimizer.
  const std::map<PoseKey, Pose>& estimates() const { return estimates_; }
  void set_estimates(const std::map<PoseKey, Pose>& est);

 private:
  void handle_descriptor(const SwarmMessage& msg, Network& net);
  void handle_verification_request(const SwarmMessage& msg, Network& net);
  void handle_loop_result(const SwarmMessage& msg);
  void try_intra_loop(const KeyframeRecord& kf);
  void insert_inter_factor(const Factor& f);

  int id_;
  const IrisEncoder* encoder_;
  ProtocolConfig cfg_;
  std::vector<KeyframeRecord> keyframes_;
  DescriptorDb db_;
  PoseGraph graph_;
  std::map<PoseKey, Pose> estimates_;
  std::map<int, int> desc_cursor_;  // peer -> next own frame to send
  std::set<std::pair<std::int64_t, std::int64_t>> seen_pairs_;
  LoopStats stats_;
  std::vector<CandidateAudit> candidate_log_;
  std::vector<VerifiedLoopRecord> verified_log_;
};

}  // namespace dcl
