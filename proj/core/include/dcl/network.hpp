#pragma once

#include <array>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dcl/messages.hpp"

namespace dcl {

struct NetworkModel {
  double comm_range = std::numeric_limits<double>::infinity();  // meters
  double latency = 0.0;       // seconds per message
  double drop_rate = 0.0;     // in [0, 1)
  std::uint64_t seed = 0;
};

struct KindCounters {
  std::int64_t sent_bytes = 0;
  std::int64_t sent_msgs = 0;
  std::int64_t recv_bytes = 0;
  std::int64_t recv_msgs = 0;
  std::int64_t dropped_bytes = 0;
  std::int64_t dropped_msgs = 0;
};

/// Payload byte accounting per robot and message kind. Envelope bytes are
/// not counted; see PROTOCOL.md.
class BandwidthLedger {
 public:
  void on_send(int robot, MessageKind kind, std::size_t bytes);
  void on_receive(int robot, MessageKind kind, std::size_t bytes);
  void on_drop(int sender, MessageKind kind, std::size_t bytes);

  const KindCounters& counters(int robot, MessageKind kind) const;
  KindCounters robot_total(int robot) const;
  std::int64_t total_sent_bytes() const;
  std::int64_t total_recv_bytes() const;
  std::int64_t total_dropped_bytes() const;
  std::vector<int> robots() const;

 private:
  mutable std::map<int, std::array<KindCounters, 8>> per_robot_;
};

struct BandwidthRow {
  int robot = 0;
  std::string kind;
  double kb_per_s = 0.0;
  double total_kb = 0.0;
};

/// CSV-ready rows, robots ascending then kinds in wire order, with a total
/// row per robot.
std::vector<BandwidthRow> report_bandwidth(const BandwidthLedger& ledger,
                                           double duration);
void write_bandwidth_csv(const std::vector<BandwidthRow>& rows,
                         const std::string& path);

struct TraceRecord {
  double send_time = 0.0;
  double deliver_time = -1.0;  // < 0 means dropped
  SwarmMessage msg;
};

void write_trace(const std::vector<TraceRecord>& trace,
                 const std::string& path);
std::vector<TraceRecord> read_trace(const std::string& path);

/// Single logical event queue connecting all robots. Delivery is decided at
/// send time from the true-position distance; delivered messages arrive
/// after the model latency. In replay mode the recorded decisions are used
/// and each send is checked against the recorded stream.
class Network {
 public:
  using PositionFn = std::function<Vec3(int robot)>;

  Network(const NetworkModel& model, int n_robots, PositionFn positions);

  void send(SwarmMessage msg);
  void step(double dt);
  std::vector<SwarmMessage> poll(int robot);

  double now() const { return now_; }
  bool idle() const;  // nothing scheduled for future delivery
  int pending() const;

  const BandwidthLedger& ledger() const { return ledger_; }
  const std::vector<TraceRecord>& trace() const { return trace_; }

  /// Replays delivery decisions from a recorded trace; sends must match the
  /// recorded stream byte for byte.
  void enable_replay(std::vector<TraceRecord> trace);

 private:
  NetworkModel model_;
  int n_robots_;
  PositionFn positions_;
  double now_ = 0.0;
  std::uint64_t drop_state_;
  struct Pending {
    double deliver_time;
    SwarmMessage msg;
  };
  std::deque<Pending> queue_;
  std::vector<std::vector<SwarmMessage>> inboxes_;
  BandwidthLedger ledger_;
  std::vector<TraceRecord> trace_;
  bool replay_ = false;
  std::vector<TraceRecord> replay_trace_;
  std::size_t replay_pos_ = 0;
};

}  // namespace dcl
