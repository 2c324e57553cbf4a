#include "dcl/network.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "dcl/error.hpp"
#include "dcl/rng.hpp"

namespace dcl {

void BandwidthLedger::on_send(int robot, MessageKind kind, std::size_t bytes) {
  KindCounters& c = per_robot_[robot][static_cast<int>(kind)];
  c.sent_bytes += static_cast<std::int64_t>(bytes);
  c.sent_msgs += 1;
}

void BandwidthLedger::on_receive(int robot, MessageKind kind,
                                 std::size_t bytes) {
  KindCounters& c = per_robot_[robot][static_cast<int>(kind)];
  c.recv_bytes += static_cast<std::int64_t>(bytes);
  c.recv_msgs += 1;
}

void BandwidthLedger::on_drop(int sender, MessageKind kind,
                              std::size_t bytes) {
  KindCounters& c = per_robot_[sender][static_cast<int>(kind)];
  c.dropped_bytes += static_cast<std::int64_t>(bytes);
  c.dropped_msgs += 1;
}

const KindCounters& BandwidthLedger::counters(int robot,
                                              MessageKind kind) const {
  return per_robot_[robot][static_cast<int>(kind)];
}

KindCounters BandwidthLedger::robot_total(int robot) const {
  KindCounters total;
  for (int k = 1; k <= 7; ++k) {
    const KindCounters& c = per_robot_[robot][k];
    total.sent_bytes += c.sent_bytes;
    total.sent_msgs += c.sent_msgs;
    total.recv_bytes += c.recv_bytes;
    total.recv_msgs += c.recv_msgs;
    total.dropped_bytes += c.dropped_bytes;
    total.dropped_msgs += c.dropped_msgs;
  }
  return total;
}

std::int64_t BandwidthLedger::total_sent_bytes() const {
  std::int64_t t = 0;
  for (const auto& [robot, arr] : per_robot_) {
    for (const KindCounters& c : arr) t += c.sent_bytes;
  }
  return t;
}

std::int64_t BandwidthLedger::total_recv_bytes() const {
  std::int64_t t = 0;
  for (const auto& [robot, arr] : per_robot_) {
    for (const KindCounters& c : arr) t += c.recv_bytes;
  }
  return t;
}

std::int64_t BandwidthLedger::total_dropped_bytes() const {
  std::int64_t t = 0;
  for (const auto& [robot, arr] : per_robot_) {
    for (const KindCounters& c : arr) t += c.dropped_bytes;
  }
  return t;
}

std::vector<int> BandwidthLedger::robots() const {
  std::vector<int> out;
  for (const auto& [robot, arr] : per_robot_) out.push_back(robot);
  return out;
}

std::vector<BandwidthRow> report_bandwidth(const BandwidthLedger& ledger,
                                           double duration) {
  if (duration <= 0) {
    fail(ErrorCode::Config, "report_bandwidth: duration must be positive");
  }
  std::vector<BandwidthRow> rows;
  for (int robot : ledger.robots()) {
    double robot_total = 0.0;
    for (int k = 1; k <= 7; ++k) {
      const KindCounters& c =
          ledger.counters(robot, static_cast<MessageKind>(k));
      const double kb = static_cast<double>(c.sent_bytes) / 1000.0;
      robot_total += kb;
      rows.push_back(BandwidthRow{robot,
                                  kind_name(static_cast<MessageKind>(k)),
                                  kb / duration, kb});
    }
    rows.push_back(BandwidthRow{robot, "total", robot_total / duration,
                                robot_total});
  }
  return rows;
}

void write_bandwidth_csv(const std::vector<BandwidthRow>& rows,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::Io, "write_bandwidth_csv: cannot open " + path);
  }
  out << "robot,kind,kb_per_s,total_kb\n";
  char buf[64];
  for (const BandwidthRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", r.kb_per_s, r.total_kb);
    out << r.robot << ',' << r.kind << ',' << buf << '\n';
  }
}

namespace {

template <typename T>
void put_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get_raw(std::ifstream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

void write_trace(const std::vector<TraceRecord>& trace,
                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    fail(ErrorCode::Io, "write_trace: cannot open " + path);
  }
  for (const TraceRecord& rec : trace) {
    put_raw(out, static_cast<std::uint32_t>(rec.msg.payload.size()));
    put_raw(out, rec.send_time);
    put_raw(out, rec.deliver_time);
    put_raw(out, static_cast<std::uint8_t>(rec.msg.src));
    put_raw(out, static_cast<std::uint8_t>(rec.msg.dst));
    put_raw(out, static_cast<std::uint8_t>(rec.msg.kind));
    out.write(reinterpret_cast<const char*>(rec.msg.payload.data()),
              static_cast<std::streamsize>(rec.msg.payload.size()));
  }
}

std::vector<TraceRecord> read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::Io, "read_trace: cannot open " + path);
  }
  std::vector<TraceRecord> trace;
  std::uint32_t len;
  while (get_raw(in, len)) {
    TraceRecord rec;
    std::uint8_t src, dst, kind;
    if (!get_raw(in, rec.send_time) || !get_raw(in, rec.deliver_time) ||
        !get_raw(in, src) || !get_raw(in, dst) || !get_raw(in, kind)) {
      fail(ErrorCode::Parse, "read_trace: truncated record header");
    }
    rec.msg.src = src;
    rec.msg.dst = dst;
    rec.msg.kind = static_cast<MessageKind>(kind);
    rec.msg.timestamp = rec.send_time;
    rec.msg.payload.resize(len);
    if (!in.read(reinterpret_cast<char*>(rec.msg.payload.data()), len)) {
      fail(ErrorCode::Parse, "read_trace: truncated payload");
    }
    trace.push_back(std::move(rec));
  }
  return trace;
}

Network::Network(const NetworkModel& model, int n_robots, PositionFn positions)
    : model_(model),
      n_robots_(n_robots),
      positions_(std::move(positions)),
      drop_state_(model.seed),
      inboxes_(n_robots) {
  if (model.drop_rate < 0.0 || model.drop_rate >= 1.0) {
    fail(ErrorCode::Config, "NetworkModel: drop_rate must be in [0, 1)");
  }
}

void Network::enable_replay(std::vector<TraceRecord> trace) {
  replay_ = true;
  replay_trace_ = std::move(trace);
  replay_pos_ = 0;
}

void Network::send(SwarmMessage msg) {
  if (msg.dst < 0 || msg.dst >= n_robots_ || msg.src < 0 ||
      msg.src >= n_robots_) {
    fail(ErrorCode::Config, "Network::send: robot id out of range");
  }
  msg.timestamp = now_;
  ledger_.on_send(msg.src, msg.kind, msg.payload.size());

  bool delivered;
  double deliver_time;
  if (replay_) {
    if (replay_pos_ >= replay_trace_.size()) {
      fail(ErrorCode::Decode, "replay: trace exhausted");
    }
    const TraceRecord& rec = replay_trace_[replay_pos_++];
    if (rec.msg.src != msg.src || rec.msg.dst != msg.dst ||
        rec.msg.kind != msg.kind || rec.msg.payload != msg.payload) {
      fail(ErrorCode::Decode, "replay: send diverged from recorded trace at "
                              "record " + std::to_string(replay_pos_ - 1));
    }
    delivered = rec.deliver_time >= 0.0;
    deliver_time = rec.deliver_time;
  } else {
    const double dist =
        (positions_(msg.src) - positions_(msg.dst)).norm();
    delivered = dist <= model_.comm_range;
    if (delivered && model_.drop_rate > 0.0) {
      Rng rng(drop_state_);
      drop_state_ = rng.next_u64();
      Rng sample(drop_state_);
      delivered = sample.uniform() >= model_.drop_rate;
    }
    deliver_time = delivered ? now_ + model_.latency : -1.0;
  }

  TraceRecord rec;
  rec.send_time = now_;
  rec.deliver_time = deliver_time;
  rec.msg = msg;
  trace_.push_back(rec);

  if (!delivered) {
    ledger_.on_drop(msg.src, msg.kind, msg.payload.size());
    return;
  }
  if (deliver_time <= now_) {
    ledger_.on_receive(msg.dst, msg.kind, msg.payload.size());
    inboxes_[msg.dst].push_back(std::move(msg));
  } else {
    queue_.push_back(Pending{deliver_time, std::move(msg)});
  }
}

void Network::step(double dt) {
  if (dt <= 0) {
    fail(ErrorCode::Config, "Network::step: dt must be positive");
  }
  now_ += dt;
  // Queue is FIFO in send order; deliveries keep that order.
  std::deque<Pending> rest;
  while (!queue_.empty()) {
    Pending p = std::move(queue_.front());
    queue_.pop_front();
    if (p.deliver_time <= now_) {
      ledger_.on_receive(p.msg.dst, p.msg.kind, p.msg.payload.size());
      inboxes_[p.msg.dst].push_back(std::move(p.msg));
    } else {
      rest.push_back(std::move(p));
    }
  }
  queue_ = std::move(rest);
}

std::vector<SwarmMessage> Network::poll(int robot) {
  std::vector<SwarmMessage> out = std::move(inboxes_[robot]);
  inboxes_[robot].clear();
  return out;
}

bool Network::idle() const { return queue_.empty(); }

int Network::pending() const { return static_cast<int>(queue_.size()); }

}  // namespace dcl
