#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dcl/cloud.hpp"
#include "dcl/iris.hpp"
#include "dcl/pose.hpp"

namespace dcl {

enum class MessageKind : std::uint8_t {
  Descriptor = 1,
  VerificationRequest = 2,
  LoopResult = 3,
  StartFlag = 4,
  RotationEstimate = 5,
  PoseEstimate = 6,
  Abort = 7,
};

const char* kind_name(MessageKind kind);

/// Stage-1 payload: 8-byte header + row key (f32) + 8-bit codes.
/// For 80x360 this is 8 + 320 + 28800 = 29,128 bytes.
struct DescriptorBody {
  std::uint8_t robot_id = 0;
  std::uint32_t frame_index = 0;
  IrisImage image;               // carries n_r (u8) and n_a (u16)
  std::vector<double> row_key;   // quantized to f32 on the wire
};

/// Stage-2 payload: 16-byte header + 12 bytes per point. The relative yaw
/// initialization travels as the descriptor shift; robot ids ride in the
/// envelope.
struct VerificationRequestBody {
  PoseKey query;   // keyframe owned by the receiving robot
  PoseKey match;   // keyframe owned by the sender, whose cloud follows
  std::int16_t shift = 0;
  PointCloud cloud;  // voxel-filtered, f32 xyz on the wire
};

/// Stage-3 payload: 112 bytes. Frames are u16; robot ids are implied by the
/// envelope (src owns the query, dst the match).
struct LoopResultBody {
  std::uint16_t query_frame = 0;
  std::uint16_t match_frame = 0;
  Pose relative_pose;  // rotation as a f32 rotation vector
  Mat6 information;    // upper triangle, 21 f32
};

struct PoseEntry {
  PoseKey key;
  Pose pose;
};

/// Round handshake plus linearization-point estimates for separator poses.
struct StartFlagBody {
  std::uint32_t round = 0;
  std::vector<PoseEntry> separators;  // 52 bytes per entry
};

struct RotationEntry {
  PoseKey key;
  Mat3 rotation;  // relaxed, row-major 9 f32 on the wire
};

struct RotationEstimateBody {
  std::uint32_t iteration = 0;
  std::vector<RotationEntry> entries;  // 40 bytes per entry
};

struct CorrectionEntry {
  PoseKey key;
  Vec6 correction;
};

struct PoseEstimateBody {
  std::uint32_t iteration = 0;
  std::vector<CorrectionEntry> entries;  // 28 bytes per entry
};

struct AbortBody {
  std::uint32_t round = 0;
  std::uint8_t reason = 0;
};

using MessageBody =
    std::variant<DescriptorBody, VerificationRequestBody, LoopResultBody,
                 StartFlagBody, RotationEstimateBody, PoseEstimateBody,
                 AbortBody>;

MessageKind body_kind(const MessageBody& body);

/// Little-endian encoding; layouts are documented byte for byte in
/// PROTOCOL.md. The returned size is the exact wire size of the body.
std::vector<std::uint8_t> encode_message(const MessageBody& body);

/// Throws a Decode error naming the byte offset on truncated or corrupt
/// input.
MessageBody decode_message(MessageKind kind,
                           const std::vector<std::uint8_t>& bytes);

struct SwarmMessage {
  int src = 0;
  int dst = 0;
  MessageKind kind = MessageKind::Abort;
  double timestamp = 0.0;          // sim seconds at send
  std::vector<std::uint8_t> payload;  // encoded body
};

SwarmMessage make_message(int src, int dst, double timestamp,
                          const MessageBody& body);

}  // namespace dcl
