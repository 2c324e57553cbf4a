#include "dcl/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include "dcl/g2o_io.hpp"
#include "dcl/rng.hpp"
#include "dcl/tum_io.hpp"

namespace dcl {

void RunConfig::validate() const {
  if (eta <= 0 || eta > 1) {
    fail(ErrorCode::Config, "eta must be in (0, 1]");
  }
  if (epsilon <= 0 || min_inlier_ratio <= 0 || min_inlier_ratio > 1) {
    fail(ErrorCode::Config, "invalid threshold configuration");
  }
  if (voxel_leaf <= 0 || knn < 1 || exclusion < 0 || submap_half_width < 0) {
    fail(ErrorCode::Config, "invalid perception configuration");
  }
  if (threads < 1) {
    fail(ErrorCode::Config, "threads must be >= 1");
  }
  if (drop_rate < 0 || drop_rate >= 1) {
    fail(ErrorCode::Config, "drop_rate must be in [0, 1)");
  }
  dgs.validate();
  bool known = scenario.empty();
  for (const std::string& name : sim::scenario_names()) {
    known = known || name == scenario;
  }
  if (!known && graph_path.empty()) {
    fail(ErrorCode::Config, "unknown scenario: " + scenario);
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::Io, "save_run_config: cannot open " + path);
  }
  out << "scenario = " << cfg.scenario << '\n';
  if (!cfg.graph_path.empty()) out << "graph = " << cfg.graph_path << '\n';
  if (!cfg.scans_dir.empty()) out << "scans = " << cfg.scans_dir << '\n';
  out << "robots = " << cfg.robots << '\n';
  out << "comm_range = " << fmt_double(cfg.comm_range) << '\n';
  out << "latency = " << fmt_double(cfg.latency) << '\n';
  out << "drop_rate = " << fmt_double(cfg.drop_rate) << '\n';
  out << "eta = " << fmt_double(cfg.eta) << '\n';
  out << "epsilon = " << fmt_double(cfg.epsilon) << '\n';
  out << "min_inlier_ratio = " << fmt_double(cfg.min_inlier_ratio) << '\n';
  out << "keyframe_d_min = " << fmt_double(cfg.keyframe.d_min) << '\n';
  out << "keyframe_theta_min = " << fmt_double(cfg.keyframe.theta_min) << '\n';
  out << "voxel_leaf = " << fmt_double(cfg.voxel_leaf) << '\n';
  out << "knn = " << cfg.knn << '\n';
  out << "exclusion = " << cfg.exclusion << '\n';
  out << "submap_half_width = " << cfg.submap_half_width << '\n';
  out << "max_outer_iterations = " << cfg.dgs.max_outer_iterations << '\n';
  out << "rotation_tol = " << fmt_double(cfg.dgs.rotation_tol) << '\n';
  out << "pose_tol = " << fmt_double(cfg.dgs.pose_tol) << '\n';
  out << "max_inner_sweeps = " << cfg.dgs.max_inner_sweeps << '\n';
  out << "pcm_enabled = " << (cfg.pcm_enabled ? 1 : 0) << '\n';
  out << "skip_perception = " << (cfg.skip_perception ? 1 : 0) << '\n';
  out << "intra_loops = " << (cfg.intra_loops ? 1 : 0) << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "threads = " << cfg.threads << '\n';
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorCode::Io, "load_run_config: cannot open " + path);
  }
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) continue;
    try {
      if (key == "scenario") cfg.scenario = value;
      else if (key == "graph") cfg.graph_path = value;
      else if (key == "scans") cfg.scans_dir = value;
      else if (key == "robots") cfg.robots = std::stoi(value);
      else if (key == "comm_range") cfg.comm_range = std::stod(value);
      else if (key == "latency") cfg.latency = std::stod(value);
      else if (key == "drop_rate") cfg.drop_rate = std::stod(value);
      else if (key == "eta") cfg.eta = std::stod(value);
      else if (key == "epsilon") cfg.epsilon = std::stod(value);
      else if (key == "min_inlier_ratio") cfg.min_inlier_ratio = std::stod(value);
      else if (key == "keyframe_d_min") cfg.keyframe.d_min = std::stod(value);
      else if (key == "keyframe_theta_min") cfg.keyframe.theta_min = std::stod(value);
      else if (key == "voxel_leaf") cfg.voxel_leaf = std::stod(value);
      else if (key == "knn") cfg.knn = std::stoi(value);
      else if (key == "exclusion") cfg.exclusion = std::stoi(value);
      else if (key == "submap_half_width") cfg.submap_half_width = std::stoi(value);
      else if (key == "max_outer_iterations") cfg.dgs.max_outer_iterations = std::stoi(value);
      else if (key == "rotation_tol") cfg.dgs.rotation_tol = std::stod(value);
      else if (key == "pose_tol") cfg.dgs.pose_tol = std::stod(value);
      else if (key == "max_inner_sweeps") cfg.dgs.max_inner_sweeps = std::stoi(value);
      else if (key == "pcm_enabled") cfg.pcm_enabled = std::stoi(value) != 0;
      else if (key == "skip_perception") cfg.skip_perception = std::stoi(value) != 0;
      else if (key == "intra_loops") cfg.intra_loops = std::stoi(value) != 0;
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "threads") cfg.threads = std::stoi(value);
      else fail(ErrorCode::Config, "unknown config key '" + key + "' at " +
                                       path + ":" + std::to_string(line_no));
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::Config, "bad value for '" + key + "' at " + path + ":" +
                                  std::to_string(line_no));
    }
  }
  return cfg;
}

namespace {

ProtocolConfig make_protocol_config(const RunConfig& cfg, int n_a) {
  ProtocolConfig p;
  p.search.k = cfg.knn;
  p.search.eta = cfg.eta;
  p.search.exclusion = cfg.exclusion;
  p.verify.n_a = n_a;
  p.verify.ransac.min_inlier_ratio = cfg.min_inlier_ratio;
  p.submap_half_width = cfg.submap_half_width;
  p.intra_loops = cfg.intra_loops;
  return p;
}

DgsConfig make_dgs_config(const RunConfig& cfg) {
  DgsConfig d = cfg.dgs;
  d.enable_pcm = cfg.pcm_enabled;
  d.pcm.epsilon = cfg.epsilon;
  return d;
}

Trajectory subset(const Trajectory& traj, int robot) {
  Trajectory out;
  for (const auto& [key, pose] : traj) {
    if (key.robot_id == robot) out[key] = pose;
  }
  return out;
}

std::vector<int> robot_ids(const Trajectory& traj) {
  std::set<int> ids;
  for (const auto& [key, pose] : traj) ids.insert(key.robot_id);
  return {ids.begin(), ids.end()};
}

void evaluate_run(RunOutputs& out, const std::vector<RobotNode>& nodes) {
  for (const RobotNode& node : nodes) {
    RobotRunStats rs;
    rs.robot = node.id();
    rs.keyframes = static_cast<int>(node.keyframes().size());
    rs.loops = node.stats();
    out.robots.push_back(rs);
    for (const CandidateAudit& c : node.candidate_log()) {
      out.candidates.push_back(c);
    }
    for (const VerifiedLoopRecord& v : node.verified_log()) {
      out.verified.push_back(v);
    }
    out.report.inter_candidates += node.stats().inter_candidates;
    out.report.inter_verified += node.stats().verifications_passed;
    out.report.intra_loops += node.stats().intra_verified;
  }
  out.report.pcm_accepted = static_cast<int>(out.accepted_inter.size());
  if (out.ground_truth.empty()) return;

  std::vector<CandidateAudit> inter;
  for (const CandidateAudit& c : out.candidates) {
    if (c.inter) inter.push_back(c);
  }
  out.report.pr = pr_curve(inter, out.true_positions);

  const std::vector<int> ids = robot_ids(out.estimates);
  const int anchor = ids.front();
  const Trajectory aligned =
      align_trajectories(out.estimates, out.ground_truth, anchor);
  for (int robot : ids) {
    RobotEval ev;
    ev.robot = robot;
    ev.ate = compute_ate_robot(aligned, out.ground_truth, robot);
    ev.are_deg = compute_are_robot(aligned, out.ground_truth, robot);
    // Odometry baseline with the most favorable treatment: each robot's
    // chain aligned to its own truth individually.
    const Trajectory odom_r = subset(out.odometry, robot);
    const Trajectory gt_r = subset(out.ground_truth, robot);
    const Trajectory aligned_r = align_trajectories(odom_r, gt_r, robot);
    ev.odometry_ate = compute_ate_robot(aligned_r, gt_r, robot);
    out.report.robots.push_back(ev);
  }
}

}  // namespace

RunOutputs run_simulation(const RunConfig& cfg,
                          const std::vector<TraceRecord>* replay_trace) {
  cfg.validate();
  sim::Scenario scn = sim::make_scenario(cfg.scenario, cfg.seed);
  int n = static_cast<int>(scn.trajectories.size());
  if (cfg.robots > 0) n = std::min(n, cfg.robots);
  scn.trajectories.resize(n);
  const double comm = cfg.comm_range >= 0 ? cfg.comm_range : scn.comm_range;

  const IrisEncoder encoder(scn.iris);
  const ProtocolConfig pcfg = make_protocol_config(cfg, scn.iris.n_a);

  std::vector<RobotNode> nodes;
  std::vector<sim::DriftingOdometry> odom;
  std::vector<Vec3> positions(n);
  for (int r = 0; r < n; ++r) {
    nodes.emplace_back(r, &encoder, pcfg);
    odom.emplace_back(scn.noise, scn.dt,
                      mix_seed(cfg.seed, 0x0D00 + static_cast<std::uint64_t>(r)));
    positions[r] = scn.trajectories[r].front().translation;
  }

  NetworkModel model;
  model.comm_range = comm;
  model.latency = cfg.latency;
  model.drop_rate = cfg.drop_rate;
  model.seed = mix_seed(cfg.seed, 0x4E7);
  Network net(model, n, [&positions](int r) { return positions[r]; });
  if (replay_trace) net.enable_replay(*replay_trace);

  RunOutputs out;
  out.n_a = scn.iris.n_a;

  struct Segment {
    Pose measurement = Pose::identity();
    Mat6 covariance = Mat6::Zero();
    Pose last_kf_odom = Pose::identity();
    int next_frame = 0;
  };
  std::vector<Segment> seg(n);

  std::size_t max_ticks = 0;
  for (const auto& traj : scn.trajectories) {
    max_ticks = std::max(max_ticks, traj.size());
  }

  auto peers_in_range = [&](int r) {
    std::vector<int> peers;
    for (int p = 0; p < n; ++p) {
      if (p != r && (positions[p] - positions[r]).norm() <= comm) {
        peers.push_back(p);
      }
    }
    return peers;
  };

  struct KeyframeJob {
    int robot = 0;
    int frame = 0;
    std::size_t tick = 0;
    Pose odom_pose;
    std::optional<Factor> factor;
  };

  for (std::size_t t = 0; t < max_ticks; ++t) {
    for (int r = 0; r < n; ++r) {
      if (t < scn.trajectories[r].size()) {
        positions[r] = scn.trajectories[r][t].translation;
      }
    }
    // Front-end advance and keyframe gating.
    std::vector<KeyframeJob> jobs;
    for (int r = 0; r < n; ++r) {
      const auto& traj = scn.trajectories[r];
      if (t >= traj.size()) continue;
      bool take = false;
      KeyframeJob job;
      job.robot = r;
      job.tick = t;
      if (t == 0) {
        take = true;
        job.odom_pose = Pose::identity();
      } else {
        const sim::OdometryStep step = odom[r].step(traj[t - 1], traj[t]);
        seg[r].measurement = compose(seg[r].measurement, step.measurement);
        seg[r].covariance += step.covariance;
        if (is_keyframe(seg[r].last_kf_odom, odom[r].pose(), cfg.keyframe)) {
          take = true;
          job.odom_pose = odom[r].pose();
        }
      }
      if (!take) continue;
      job.frame = seg[r].next_frame++;
      if (job.frame > 0) {
        Factor f;
        f.from = PoseKey{r, job.frame - 1};
        f.to = PoseKey{r, job.frame};
        f.measurement = seg[r].measurement;
        f.information = seg[r].covariance.ldlt().solve(Mat6::Identity());
        f.kind = FactorKind::Odometry;
        job.factor = f;
      }
      seg[r].measurement = Pose::identity();
      seg[r].covariance = Mat6::Zero();
      seg[r].last_kf_odom = job.odom_pose;
      jobs.push_back(job);
    }
    // Scan, filter and describe; independent per robot, so the heavy part
    // may run in parallel.
    std::vector<KeyframeRecord> records(jobs.size());
    auto build_record = [&](std::size_t j) {
      const KeyframeJob& job = jobs[j];
      const Pose& true_pose = scn.trajectories[job.robot][job.tick];
      const std::uint64_t scan_seed =
          mix_seed(cfg.seed, 0x5C000000ull +
                                 static_cast<std::uint64_t>(job.robot) * 1000003ull +
                                 static_cast<std::uint64_t>(job.frame));
      const PointCloud scan =
          sim::raycast_scan(scn.world, true_pose, scn.lidar, scan_seed);
      KeyframeRecord kf;
      kf.key = PoseKey{job.robot, job.frame};
      kf.odom_pose = job.odom_pose;
      kf.descriptor = encoder.describe(scan);
      kf.filtered_cloud = voxel_downsample(scan, cfg.voxel_leaf);
      kf.timestamp = static_cast<double>(job.tick) * scn.dt;
      records[j] = std::move(kf);
    };
    if (cfg.threads > 1 && jobs.size() > 1) {
      std::vector<std::future<void>> futures;
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        futures.push_back(std::async(std::launch::async, build_record, j));
      }
      for (auto& f : futures) f.get();
    } else {
      for (std::size_t j = 0; j < jobs.size(); ++j) build_record(j);
    }
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      const KeyframeJob& job = jobs[j];
      const PoseKey key{job.robot, job.frame};
      const Pose& true_pose = scn.trajectories[job.robot][job.tick];
      out.ground_truth[key] = true_pose;
      out.true_positions[key] = true_pose.translation;
      out.odometry[key] = job.odom_pose;
      nodes[job.robot].add_keyframe(std::move(records[j]), job.factor);
    }
    // Protocol turns in ascending id order, then the network advances.
    for (int r = 0; r < n; ++r) {
      nodes[r].protocol_tick(net.poll(r), peers_in_range(r), net);
    }
    net.step(scn.dt);
  }
  // Drain in-flight verification traffic.
  for (int extra = 0; extra < 200; ++extra) {
    bool quiet = net.idle();
    for (int r = 0; r < n; ++r) {
      const auto inbox = net.poll(r);
      if (!inbox.empty()) quiet = false;
      nodes[r].protocol_tick(inbox, peers_in_range(r), net);
    }
    net.step(scn.dt);
    if (quiet && net.idle()) break;
  }
  out.duration = net.now();

  // Distributed back-end over the same network.
  std::vector<RobotGraph> graphs;
  for (RobotNode& node : nodes) {
    RobotGraph g;
    g.robot_id = node.id();
    g.graph.factors = node.graph().factors;
    for (const auto& [key, pose] : node.estimates()) {
      g.graph.nodes[key] = pose;
    }
    // Endpoint nodes of inter factors that live on the peer.
    for (const Factor& f : node.graph().factors) {
      if (!g.graph.nodes.count(f.from)) g.graph.nodes[f.from] = Pose();
      if (!g.graph.nodes.count(f.to)) g.graph.nodes[f.to] = Pose();
    }
    graphs.push_back(std::move(g));
  }
  const PgoResult pgo = run_distributed_pgo(graphs, make_dgs_config(cfg), net);
  out.pgo_log = pgo.log;
  out.pgo_converged = pgo.converged;
  out.accepted_inter = pgo.accepted_inter;
  for (RobotNode& node : nodes) {
    node.set_estimates(pgo.estimates);
    for (const auto& [key, pose] : node.estimates()) {
      out.estimates[key] = pose;
    }
  }
  // Audit trail for the accepted/rejected loops of the final round.
  {
    std::vector<Factor> all_inter;
    std::set<std::pair<std::int64_t, std::int64_t>> seen;
    for (const RobotNode& node : nodes) {
      for (const Factor& f : node.inter_factors()) {
        if (seen.insert({pack_key(f.from), pack_key(f.to)}).second) {
          all_inter.push_back(f);
        }
      }
    }
    if (!all_inter.empty() && cfg.pcm_enabled) {
      PcmConfig pc;
      pc.epsilon = cfg.epsilon;
      out.pcm_audit =
          filter_inter_loops(all_inter, odometry_chains(graphs), pc).audit;
    } else {
      for (const Factor& f : all_inter) {
        PcmLoopAudit a;
        a.loop = f;
        a.accepted = true;
        out.pcm_audit.push_back(a);
      }
    }
  }

  out.bandwidth = report_bandwidth(net.ledger(), out.duration);
  out.merged_graph = merge_robot_graphs(graphs);
  out.merged_graph.nodes = out.estimates;
  evaluate_run(out, nodes);
  out.report.extras["total_sent_kb"] =
      static_cast<double>(net.ledger().total_sent_bytes()) / 1000.0;
  out.report.extras["pgo_rounds"] = pgo.rounds;
  write_outputs(cfg, out, net.trace(), cfg.out_dir);
  return out;
}

RunOutputs run_from_graph(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.graph_path.empty()) {
    fail(ErrorCode::Config, "run_from_graph: graph path required");
  }
  const G2oLoadResult loaded = load_g2o(cfg.graph_path);
  validate_graph(loaded.graph);
  std::set<int> ids;
  for (const auto& [key, pose] : loaded.graph.nodes) ids.insert(key.robot_id);
  const int n = ids.empty() ? 0 : *ids.rbegin() + 1;

  RunOutputs out;
  const bool perception = !cfg.skip_perception && !cfg.scans_dir.empty();
  std::vector<RobotGraph> graphs;
  std::vector<Vec3> positions(std::max(n, 1), Vec3::Zero());
  NetworkModel model;
  model.comm_range = cfg.comm_range >= 0 ? cfg.comm_range
                                         : std::numeric_limits<double>::infinity();
  model.latency = 0.0;
  model.seed = mix_seed(cfg.seed, 0x4E8);
  Network net(model, std::max(n, 1),
              [&positions](int r) { return positions[r]; });

  if (!perception) {
    for (int robot : ids) {
      RobotGraph g;
      g.robot_id = robot;
      for (const auto& [key, pose] : loaded.graph.nodes) {
        if (key.robot_id == robot) g.graph.nodes[key] = pose;
      }
      for (const Factor& f : loaded.graph.factors) {
        if (f.kind == FactorKind::InterLoop
                ? (f.from.robot_id == robot || f.to.robot_id == robot)
                : f.from.robot_id == robot) {
          g.graph.factors.push_back(f);
          if (!g.graph.nodes.count(f.from)) {
            g.graph.nodes[f.from] = loaded.graph.nodes.at(f.from);
          }
          if (!g.graph.nodes.count(f.to)) {
            g.graph.nodes[f.to] = loaded.graph.nodes.at(f.to);
          }
        }
      }
      graphs.push_back(std::move(g));
    }
  } else {
    // Rebuild perception from dumped keyframe scans over a virtual
    // full-connectivity rendezvous.
    const IrisEncoder encoder{IrisConfig{}};
    const ProtocolConfig pcfg = make_protocol_config(cfg, IrisConfig{}.n_a);
    std::vector<RobotNode> nodes;
    std::map<int, std::vector<std::pair<PoseKey, Pose>>> per_robot;
    for (const auto& [key, pose] : loaded.graph.nodes) {
      per_robot[key.robot_id].push_back({key, pose});
    }
    std::map<int, int> node_index;
    for (int robot : ids) {
      node_index[robot] = static_cast<int>(nodes.size());
      nodes.emplace_back(robot, &encoder, pcfg);
    }
    std::map<int, std::map<int, Factor>> odom_by_robot;
    for (const Factor& f : loaded.graph.factors) {
      if (f.kind == FactorKind::Odometry) {
        odom_by_robot[f.from.robot_id][f.from.frame_index] = f;
      }
    }
    std::size_t max_frames = 0;
    for (const auto& [robot, keyed] : per_robot) {
      max_frames = std::max(max_frames, keyed.size());
    }
    for (std::size_t t = 0; t < max_frames; ++t) {
      for (int robot : ids) {
        const auto& keyed = per_robot[robot];
        if (t >= keyed.size()) continue;
        const auto& [key, pose] = keyed[t];
        positions[robot] = pose.translation;
        char name[64];
        std::snprintf(name, sizeof(name), "robot%d/%06d.bin", robot,
                      key.frame_index);
        const std::string scan_path =
            (std::filesystem::path(cfg.scans_dir) / name).string();
        const PointCloud scan = load_cloud_bin(scan_path);
        KeyframeRecord kf;
        kf.key = key;
        kf.odom_pose = pose;
        kf.descriptor = encoder.describe(scan);
        kf.filtered_cloud = voxel_downsample(scan, cfg.voxel_leaf);
        kf.timestamp = static_cast<double>(key.frame_index);
        std::optional<Factor> f;
        auto it = odom_by_robot[robot].find(key.frame_index - 1);
        if (it != odom_by_robot[robot].end()) f = it->second;
        nodes[node_index[robot]].add_keyframe(std::move(kf), f);
        out.odometry[key] = pose;
      }
      for (int robot : ids) {
        std::vector<int> peers;
        for (int p : ids) {
          if (p != robot) peers.push_back(p);
        }
        nodes[node_index[robot]].protocol_tick(net.poll(robot), peers, net);
      }
      net.step(0.1);
    }
    for (int extra = 0; extra < 200; ++extra) {
      bool quiet = net.idle();
      for (int robot : ids) {
        const auto inbox = net.poll(robot);
        if (!inbox.empty()) quiet = false;
        std::vector<int> peers;
        for (int p : ids) {
          if (p != robot) peers.push_back(p);
        }
        nodes[node_index[robot]].protocol_tick(inbox, peers, net);
      }
      net.step(0.1);
      if (quiet && net.idle()) break;
    }
    for (RobotNode& node : nodes) {
      RobotGraph g;
      g.robot_id = node.id();
      for (const auto& [key, pose] : node.estimates()) {
        g.graph.nodes[key] = pose;
      }
      g.graph.factors = node.graph().factors;
      for (const Factor& f : g.graph.factors) {
        if (!g.graph.nodes.count(f.from)) g.graph.nodes[f.from] = Pose();
        if (!g.graph.nodes.count(f.to)) g.graph.nodes[f.to] = Pose();
      }
      graphs.push_back(std::move(g));
    }
    evaluate_run(out, nodes);
  }

  for (const auto& [key, pose] : loaded.graph.nodes) {
    if (!out.odometry.count(key)) out.odometry[key] = pose;
  }
  const PgoResult pgo = run_distributed_pgo(graphs, make_dgs_config(cfg), net);
  out.pgo_log = pgo.log;
  out.pgo_converged = pgo.converged;
  out.accepted_inter = pgo.accepted_inter;
  for (const auto& [key, pose] : pgo.estimates) {
    out.estimates[key] = pose;
  }
  out.duration = std::max(net.now(), 0.1);
  out.bandwidth = report_bandwidth(net.ledger(), out.duration);
  out.merged_graph = merge_robot_graphs(graphs);
  out.merged_graph.nodes = out.estimates;
  out.report.pcm_accepted = static_cast<int>(out.accepted_inter.size());
  write_outputs(cfg, out, net.trace(), cfg.out_dir);
  return out;
}

void write_outputs(const RunConfig& cfg, const RunOutputs& out,
                   const std::vector<TraceRecord>& trace,
                   const std::string& dir) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_run_config(cfg, (base / "config.cfg").string());

  auto dump_traj = [&](const Trajectory& traj, const std::string& suffix) {
    for (int robot : robot_ids(traj)) {
      std::vector<TumRecord> records;
      for (const auto& [key, pose] : traj) {
        if (key.robot_id != robot) continue;
        records.push_back(TumRecord{static_cast<double>(key.frame_index), pose});
      }
      char name[64];
      std::snprintf(name, sizeof(name), "robot%d_%s.tum", robot,
                    suffix.c_str());
      save_tum(records, (base / name).string());
    }
  };
  dump_traj(out.estimates, "est");
  dump_traj(out.odometry, "odom");
  if (!out.ground_truth.empty()) dump_traj(out.ground_truth, "gt");
  save_g2o(out.merged_graph, (base / "graph.g2o").string());
  write_bandwidth_csv(out.bandwidth, (base / "ledger.csv").string());
  {
    std::ofstream conv((base / "convergence.csv").string());
    conv << "round,stage,sweeps,change,cost\n";
    char buf[96];
    for (const PgoRoundLog& log : out.pgo_log) {
      std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.9g,%.9g", log.round,
                    log.stage.c_str(), log.sweeps, log.change, log.cost);
      conv << buf << '\n';
    }
  }
  write_pcm_audit(out.pcm_audit, (base / "pcm_audit.csv").string());
  write_report_json(out.report, (base / "report.json").string());
  write_trace(trace, (base / "trace.bin").string());
}

EvalReport evaluate_directory(const std::string& dir) {
  const std::filesystem::path base(dir);
  Trajectory est, gt;
  for (int robot = 0; robot < 64; ++robot) {
    char est_name[64], gt_name[64];
    std::snprintf(est_name, sizeof(est_name), "robot%d_est.tum", robot);
    std::snprintf(gt_name, sizeof(gt_name), "robot%d_gt.tum", robot);
    const auto est_path = base / est_name;
    const auto gt_path = base / gt_name;
    if (!std::filesystem::exists(est_path)) continue;
    const auto est_records = load_tum(est_path.string());
    for (const TumRecord& rec : est_records) {
      est[PoseKey{robot, static_cast<int>(rec.timestamp)}] = rec.pose;
    }
    if (std::filesystem::exists(gt_path)) {
      for (const TumRecord& rec : load_tum(gt_path.string())) {
        gt[PoseKey{robot, static_cast<int>(rec.timestamp)}] = rec.pose;
      }
    }
  }
  if (est.empty()) {
    fail(ErrorCode::Io, "evaluate_directory: no robot*_est.tum in " + dir);
  }
  EvalReport report;
  if (!gt.empty()) {
    const std::vector<int> ids = robot_ids(est);
    const Trajectory aligned = align_trajectories(est, gt, ids.front());
    for (int robot : ids) {
      RobotEval ev;
      ev.robot = robot;
      ev.ate = compute_ate_robot(aligned, gt, robot);
      ev.are_deg = compute_are_robot(aligned, gt, robot);
      report.robots.push_back(ev);
    }
  }
  write_report_json(report, (base / "eval_report.json").string());
  return report;
}

}  // namespace dcl
