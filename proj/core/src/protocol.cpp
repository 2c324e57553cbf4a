#include "dcl/protocol.hpp"

#include <algorithm>

namespace dcl {

void RobotNode::add_keyframe(KeyframeRecord kf,
                             const std::optional<Factor>& odom) {
  const PoseKey key = kf.key;
  graph_.nodes[key] = kf.odom_pose;
  estimates_[key] = kf.odom_pose;
  if (odom) {
    graph_.factors.push_back(*odom);
  }
  db_.insert_own(key, kf.descriptor);
  keyframes_.push_back(std::move(kf));
  if (cfg_.intra_loops) {
    try_intra_loop(keyframes_.back());
  }
}

void RobotNode::try_intra_loop(const KeyframeRecord& kf) {
  std::vector<CandidateAudit> audits;
  std::vector<LoopCandidate> evaluated;
  const auto cand = db_.find_candidate(kf.key, kf.descriptor, cfg_.search,
                                       /*intra=*/true, &evaluated);
  for (const LoopCandidate& c : evaluated) {
    candidate_log_.push_back(
        CandidateAudit{c.query, c.match, c.distance, c.shift, false});
  }
  if (!cand) return;
  ++stats_.intra_candidates;
  const PointCloud submap =
      build_submap(keyframes_, kf.key.frame_index, cfg_.submap_half_width);
  const auto& match_kf = keyframes_[cand->match.frame_index];
  VerifyConfig vcfg = cfg_.verify;
  vcfg.max_fitness = cfg_.intra_max_fitness;
  vcfg.ransac.min_inlier_ratio =
      std::max(vcfg.ransac.min_inlier_ratio, cfg_.intra_min_inlier_ratio);
  const auto verified =
      verify_candidate(*cand, match_kf.filtered_cloud, submap, vcfg);
  if (!verified) return;
  ++stats_.intra_verified;
  verified_log_.push_back(VerifiedLoopRecord{cand->query, cand->match,
                                             cand->distance,
                                             verified->inlier_ratio,
                                             verified->fitness, false});
  Factor f;
  f.from = cand->query;
  f.to = cand->match;
  f.measurement = verified->relative_pose;
  f.kind = FactorKind::IntraLoop;
  graph_.factors.push_back(f);
}

void RobotNode::protocol_tick(const std::vector<SwarmMessage>& inbox,
                              const std::vector<int>& peers_in_range,
                              Network& net) {
  for (const SwarmMessage& msg : inbox) {
    switch (msg.kind) {
      case MessageKind::Descriptor:
        ++stats_.descriptors_received;
        handle_descriptor(msg, net);
        break;
      case MessageKind::VerificationRequest:
        handle_verification_request(msg, net);
        break;
      case MessageKind::LoopResult:
        handle_loop_result(msg);
        break;
      default:
        // Optimizer traffic is consumed by the PGO loop; anything else
        // arriving here is skipped.
        ++stats_.unknown_messages;
        break;
    }
  }
  // Stage 1: resume per-peer descriptor cursors for peers in range.
  for (int peer : peers_in_range) {
    if (peer == id_) continue;
    int& cursor = desc_cursor_[peer];
    int budget = cfg_.max_descriptors_per_tick_per_peer;
    while (cursor < static_cast<int>(keyframes_.size()) && budget > 0) {
      const KeyframeRecord& kf = keyframes_[cursor];
      DescriptorBody body;
      body.robot_id = static_cast<std::uint8_t>(id_);
      body.frame_index = static_cast<std::uint32_t>(kf.key.frame_index);
      body.image = kf.descriptor.image;
      body.row_key = kf.descriptor.row_key;
      net.send(make_message(id_, peer, net.now(), body));
      ++stats_.descriptors_sent;
      ++cursor;
      --budget;
    }
  }
}

void RobotNode::handle_descriptor(const SwarmMessage& msg, Network& net) {
  const auto body = std::get<DescriptorBody>(
      decode_message(MessageKind::Descriptor, msg.payload));
  const PoseKey query_key{static_cast<int>(body.robot_id),
                          static_cast<int>(body.frame_index)};
  // Features are recomputed locally; only image and row key travel.
  IrisDescriptor query = encoder_->from_image(body.image);
  std::vector<LoopCandidate> evaluated;
  const auto cand = db_.find_candidate(query_key, query, cfg_.search,
                                       /*intra=*/false, &evaluated);
  db_.insert_remote(query_key, body.row_key);
  for (const LoopCandidate& c : evaluated) {
    candidate_log_.push_back(
        CandidateAudit{c.query, c.match, c.distance, c.shift, true});
  }
  if (!cand) return;
  const auto pair_id =
      std::make_pair(pack_key(cand->query), pack_key(cand->match));
  if (!seen_pairs_.insert(pair_id).second) return;
  ++stats_.inter_candidates;
  // Stage 2: ship the recognized place's filtered cloud to the query robot.
  const KeyframeRecord& match_kf = keyframes_[cand->match.frame_index];
  VerificationRequestBody req;
  req.query = cand->query;
  req.match = cand->match;
  req.shift = static_cast<std::int16_t>(cand->shift);
  req.cloud = match_kf.filtered_cloud;
  net.send(make_message(id_, query_key.robot_id, net.now(), req));
  ++stats_.verification_requests;
}

void RobotNode::handle_verification_request(const SwarmMessage& msg,
                                            Network& net) {
  const auto body = std::get<VerificationRequestBody>(
      decode_message(MessageKind::VerificationRequest, msg.payload));
  if (body.query.robot_id != id_ ||
      body.query.frame_index >= static_cast<int>(keyframes_.size())) {
    ++stats_.unknown_messages;
    return;
  }
  ++stats_.verifications_attempted;
  LoopCandidate cand;
  cand.query = body.query;
  cand.match = body.match;
  cand.shift = body.shift;
  const PointCloud submap = build_submap(keyframes_, body.query.frame_index,
                                         cfg_.submap_half_width);
  const auto verified =
      verify_candidate(cand, body.cloud, submap, cfg_.verify);
  if (!verified) return;
  ++stats_.verifications_passed;
  verified_log_.push_back(VerifiedLoopRecord{cand.query, cand.match, 0.0,
                                             verified->inlier_ratio,
                                             verified->fitness, true});
  Factor f;
  f.from = cand.query;
  f.to = cand.match;
  f.measurement = verified->relative_pose;
  f.kind = FactorKind::InterLoop;
  insert_inter_factor(f);
  // Stage 3: feed the measurement back to the robot that found the match.
  LoopResultBody res;
  res.query_frame = static_cast<std::uint16_t>(cand.query.frame_index);
  res.match_frame = static_cast<std::uint16_t>(cand.match.frame_index);
  res.relative_pose = verified->relative_pose;
  res.information = f.information;
  net.send(make_message(id_, cand.match.robot_id, net.now(), res));
}

void RobotNode::handle_loop_result(const SwarmMessage& msg) {
  const auto body = std::get<LoopResultBody>(
      decode_message(MessageKind::LoopResult, msg.payload));
  ++stats_.loop_results_received;
  Factor f;
  f.from = PoseKey{msg.src, static_cast<int>(body.query_frame)};
  f.to = PoseKey{id_, static_cast<int>(body.match_frame)};
  f.measurement = body.relative_pose;
  f.information = body.information;
  f.kind = FactorKind::InterLoop;
  insert_inter_factor(f);
}

void RobotNode::insert_inter_factor(const Factor& f) {
  for (const Factor& existing : graph_.factors) {
    if (existing.kind == FactorKind::InterLoop && existing.from == f.from &&
        existing.to == f.to) {
      return;  // at most one factor per (query, match) pair
    }
  }
  graph_.factors.push_back(f);
}

std::vector<Factor> RobotNode::inter_factors() const {
  std::vector<Factor> out;
  for (const Factor& f : graph_.factors) {
    if (f.kind == FactorKind::InterLoop) out.push_back(f);
  }
  return out;
}

void RobotNode::set_estimates(const std::map<PoseKey, Pose>& est) {
  for (const auto& [key, pose] : est) {
    if (key.robot_id == id_) {
      estimates_[key] = pose;
    }
  }
}

}  // namespace dcl
