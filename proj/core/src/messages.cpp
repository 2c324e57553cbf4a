#include "dcl/messages.hpp"

#include <cstring>

#include "dcl/error.hpp"

namespace dcl {
namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& buf) : buf_(buf) {}

  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }

 private:
  std::vector<std::uint8_t>& buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_]) |
                      static_cast<std::uint16_t>(buf_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::size_t pos() const { return pos_; }
  void expect_end() const {
    if (pos_ != buf_.size()) {
      fail(ErrorCode::Decode, "trailing bytes after offset " +
                                  std::to_string(pos_));
    }
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) {
      fail(ErrorCode::Decode,
           "truncated message at offset " + std::to_string(pos_));
    }
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

std::uint32_t packed_u32(const PoseKey& key) {
  return static_cast<std::uint32_t>(pack_key(key));
}

PoseKey key_from_u32(std::uint32_t v) {
  return unpack_key(static_cast<std::int64_t>(v));
}

void write_rotvec_pose_f32(Writer& w, const Pose& pose) {
  const Vec6 v = log_map(pose);
  for (int i = 0; i < 6; ++i) {
    w.f32(static_cast<float>(v(i)));
  }
}

Pose read_rotvec_pose_f32(Reader& r) {
  Vec6 v;
  for (int i = 0; i < 6; ++i) {
    v(i) = r.f32();
  }
  return exp_map(v);
}

}  // namespace

const char* kind_name(MessageKind kind) {
  switch (kind) {
    case MessageKind::Descriptor: return "descriptor";
    case MessageKind::VerificationRequest: return "verification_request";
    case MessageKind::LoopResult: return "loop_result";
    case MessageKind::StartFlag: return "start_flag";
    case MessageKind::RotationEstimate: return "rotation_estimate";
    case MessageKind::PoseEstimate: return "pose_estimate";
    case MessageKind::Abort: return "abort";
  }
  return "unknown";
}

MessageKind body_kind(const MessageBody& body) {
  return static_cast<MessageKind>(body.index() + 1);
}

std::vector<std::uint8_t> encode_message(const MessageBody& body) {
  std::vector<std::uint8_t> buf;
  Writer w(buf);
  switch (body_kind(body)) {
    case MessageKind::Descriptor: {
      const auto& b = std::get<DescriptorBody>(body);
      if (b.image.n_r > 255 || b.image.n_a > 65535 ||
          static_cast<int>(b.row_key.size()) != b.image.n_r) {
        fail(ErrorCode::Config, "descriptor body out of range");
      }
      w.u8(b.robot_id);
      w.u32(b.frame_index);
      w.u8(static_cast<std::uint8_t>(b.image.n_r));
      w.u16(static_cast<std::uint16_t>(b.image.n_a));
      for (double k : b.row_key) {
        w.f32(static_cast<float>(k));
      }
      for (std::uint8_t c : b.image.codes) {
        w.u8(c);
      }
      break;
    }
    case MessageKind::VerificationRequest: {
      const auto& b = std::get<VerificationRequestBody>(body);
      w.u32(packed_u32(b.query));
      w.u32(packed_u32(b.match));
      w.u16(static_cast<std::uint16_t>(b.shift));
      w.u16(0);  // reserved
      w.u32(static_cast<std::uint32_t>(b.cloud.size()));
      for (const Vec3& p : b.cloud.points) {
        w.f32(static_cast<float>(p.x()));
        w.f32(static_cast<float>(p.y()));
        w.f32(static_cast<float>(p.z()));
      }
      break;
    }
    case MessageKind::LoopResult: {
      const auto& b = std::get<LoopResultBody>(body);
      w.u16(b.query_frame);
      w.u16(b.match_frame);
      write_rotvec_pose_f32(w, b.relative_pose);
      for (int i = 0; i < 6; ++i) {
        for (int j = i; j < 6; ++j) {
          w.f32(static_cast<float>(b.information(i, j)));
        }
      }
      break;
    }
    case MessageKind::StartFlag: {
      const auto& b = std::get<StartFlagBody>(body);
      w.u32(b.round);
      w.u32(static_cast<std::uint32_t>(b.separators.size()));
      for (const PoseEntry& e : b.separators) {
        w.u32(packed_u32(e.key));
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) {
            w.f32(static_cast<float>(e.pose.rotation(r, c)));
          }
        }
        for (int i = 0; i < 3; ++i) {
          w.f32(static_cast<float>(e.pose.translation(i)));
        }
      }
      break;
    }
    case MessageKind::RotationEstimate: {
      const auto& b = std::get<RotationEstimateBody>(body);
      w.u32(b.iteration);
      w.u32(static_cast<std::uint32_t>(b.entries.size()));
      for (const RotationEntry& e : b.entries) {
        w.u32(packed_u32(e.key));
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) {
            w.f32(static_cast<float>(e.rotation(r, c)));
          }
        }
      }
      break;
    }
    case MessageKind::PoseEstimate: {
      const auto& b = std::get<PoseEstimateBody>(body);
      w.u32(b.iteration);
      w.u32(static_cast<std::uint32_t>(b.entries.size()));
      for (const CorrectionEntry& e : b.entries) {
        w.u32(packed_u32(e.key));
        for (int i = 0; i < 6; ++i) {
          w.f32(static_cast<float>(e.correction(i)));
        }
      }
      break;
    }
    case MessageKind::Abort: {
      const auto& b = std::get<AbortBody>(body);
      w.u32(b.round);
      w.u8(b.reason);
      break;
    }
  }
  return buf;
}

MessageBody decode_message(MessageKind kind,
                           const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  switch (kind) {
    case MessageKind::Descriptor: {
      DescriptorBody b;
      b.robot_id = r.u8();
      b.frame_index = r.u32();
      b.image.n_r = r.u8();
      b.image.n_a = r.u16();
      if (b.image.n_r < 1 || b.image.n_a < 2) {
        fail(ErrorCode::Decode, "descriptor dimensions corrupt at offset 5");
      }
      b.row_key.resize(b.image.n_r);
      for (double& k : b.row_key) {
        k = r.f32();
      }
      b.image.codes.resize(static_cast<std::size_t>(b.image.n_r) *
                           b.image.n_a);
      for (std::uint8_t& c : b.image.codes) {
        c = r.u8();
      }
      r.expect_end();
      return b;
    }
    case MessageKind::VerificationRequest: {
      VerificationRequestBody b;
      b.query = key_from_u32(r.u32());
      b.match = key_from_u32(r.u32());
      b.shift = static_cast<std::int16_t>(r.u16());
      r.u16();  // reserved
      const std::uint32_t n = r.u32();
      b.cloud.points.reserve(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        const double x = r.f32();
        const double y = r.f32();
        const double z = r.f32();
        b.cloud.points.emplace_back(x, y, z);
      }
      r.expect_end();
      return b;
    }
    case MessageKind::LoopResult: {
      LoopResultBody b;
      b.query_frame = r.u16();
      b.match_frame = r.u16();
      b.relative_pose = read_rotvec_pose_f32(r);
      b.information = Mat6::Zero();
      for (int i = 0; i < 6; ++i) {
        for (int j = i; j < 6; ++j) {
          const double v = r.f32();
          b.information(i, j) = v;
          b.information(j, i) = v;
        }
      }
      r.expect_end();
      return b;
    }
    case MessageKind::StartFlag: {
      StartFlagBody b;
      b.round = r.u32();
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        PoseEntry e;
        e.key = key_from_u32(r.u32());
        for (int row = 0; row < 3; ++row) {
          for (int c = 0; c < 3; ++c) {
            e.pose.rotation(row, c) = r.f32();
          }
        }
        for (int k = 0; k < 3; ++k) {
          e.pose.translation(k) = r.f32();
        }
        e.pose.rotation = project_to_rotation(e.pose.rotation);
        b.separators.push_back(e);
      }
      r.expect_end();
      return b;
    }
    case MessageKind::RotationEstimate: {
      RotationEstimateBody b;
      b.iteration = r.u32();
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        RotationEntry e;
        e.key = key_from_u32(r.u32());
        for (int row = 0; row < 3; ++row) {
          for (int c = 0; c < 3; ++c) {
            e.rotation(row, c) = r.f32();
          }
        }
        b.entries.push_back(e);
      }
      r.expect_end();
      return b;
    }
    case MessageKind::PoseEstimate: {
      PoseEstimateBody b;
      b.iteration = r.u32();
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) {
        CorrectionEntry e;
        e.key = key_from_u32(r.u32());
        for (int k = 0; k < 6; ++k) {
          e.correction(k) = r.f32();
        }
        b.entries.push_back(e);
      }
      r.expect_end();
      return b;
    }
    case MessageKind::Abort: {
      AbortBody b;
      b.round = r.u32();
      b.reason = r.u8();
      r.expect_end();
      return b;
    }
  }
  fail(ErrorCode::Decode, "unknown message kind");
}

SwarmMessage make_message(int src, int dst, double timestamp,
                          const MessageBody& body) {
  SwarmMessage msg;
  msg.src = src;
  msg.dst = dst;
  msg.kind = body_kind(body);
  msg.timestamp = timestamp;
  msg.payload = encode_message(body);
  return msg;
}

}  // namespace dcl
