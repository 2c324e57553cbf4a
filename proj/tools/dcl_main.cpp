#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "dcl/runner.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string scenario;
  std::string graph;
  std::string scans;
  int robots = -1;
  double comm_range = -2.0;  // -2 = unset, -1 = scenario default
  double eta = -1.0;
  double epsilon = -1.0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int threads = 0;
  bool skip_perception = false;
  bool no_pcm = false;
  int max_iters = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  cmd->add_option("--scenario", f.scenario, "built-in scenario name");
  cmd->add_option("--graph", f.graph, "multi-robot g2o file");
  cmd->add_option("--scans", f.scans, "keyframe scan directory");
  cmd->add_option("--robots", f.robots, "limit robot count");
  cmd->add_option("--comm-range", f.comm_range, "communication range, meters");
  cmd->add_option("--eta", f.eta, "descriptor distance threshold");
  cmd->add_option("--epsilon", f.epsilon, "PCM consistency threshold");
  cmd->add_option("--seed", f.seed, "run seed")->each([&f](const std::string&) {
    f.seed_set = true;
  });
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "worker threads (1 = deterministic default)");
  cmd->add_flag("--skip-perception", f.skip_perception,
                "PCM + DGS only on recorded loops");
  cmd->add_flag("--no-pcm", f.no_pcm, "disable outlier rejection");
  cmd->add_option("--max-iters", f.max_iters, "outer optimization rounds");
}

dcl::RunConfig resolve(const CommonFlags& f) {
  dcl::RunConfig cfg;
  if (!f.config_path.empty()) {
    cfg = dcl::load_run_config(f.config_path);
  }
  if (!f.scenario.empty()) cfg.scenario = f.scenario;
  if (!f.graph.empty()) cfg.graph_path = f.graph;
  if (!f.scans.empty()) cfg.scans_dir = f.scans;
  if (f.robots > 0) cfg.robots = f.robots;
  if (f.comm_range > -2.0) cfg.comm_range = f.comm_range;
  if (f.eta > 0) cfg.eta = f.eta;
  if (f.epsilon > 0) cfg.epsilon = f.epsilon;
  if (f.seed_set) cfg.seed = f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.threads > 0) cfg.threads = f.threads;
  if (f.skip_perception) cfg.skip_perception = true;
  if (f.no_pcm) cfg.pcm_enabled = false;
  if (f.max_iters > 0) cfg.dgs.max_outer_iterations = f.max_iters;
  return cfg;
}

void print_summary(const dcl::RunOutputs& out) {
  std::printf("keyframes:");
  for (const auto& rs : out.robots) {
    std::printf(" robot%d=%d", rs.robot, rs.keyframes);
  }
  std::printf("\nloops: candidates=%d verified=%d pcm_accepted=%d intra=%d\n",
              out.report.inter_candidates, out.report.inter_verified,
              out.report.pcm_accepted, out.report.intra_loops);
  for (const auto& ev : out.report.robots) {
    std::printf("robot%d: ate=%.4f m are=%.4f deg odometry_ate=%.4f m\n",
                ev.robot, ev.ate, ev.are_deg, ev.odometry_ate);
  }
  std::printf("pgo: rounds=%d converged=%s\n",
              out.pgo_log.empty() ? 0 : out.pgo_log.back().round,
              out.pgo_converged ? "yes" : "no");
}

int dispatch(const std::string& cmd, const CommonFlags& flags,
             const std::string& eval_dir, const std::string& replay_dir) {
  if (cmd == "simulate") {
    const dcl::RunConfig cfg = resolve(flags);
    print_summary(dcl::run_simulation(cfg));
    return 0;
  }
  if (cmd == "run") {
    const dcl::RunConfig cfg = resolve(flags);
    print_summary(dcl::run_from_graph(cfg));
    return 0;
  }
  if (cmd == "eval") {
    const dcl::EvalReport report = dcl::evaluate_directory(eval_dir);
    for (const auto& ev : report.robots) {
      std::printf("robot%d: ate=%.6f m are=%.6f deg\n", ev.robot, ev.ate,
                  ev.are_deg);
    }
    return 0;
  }
  if (cmd == "replay") {
    const std::filesystem::path base(replay_dir);
    dcl::RunConfig cfg =
        dcl::load_run_config((base / "config.cfg").string());
    const auto trace = dcl::read_trace((base / "trace.bin").string());
    CommonFlags f = flags;
    dcl::RunConfig overlay = resolve(f);
    cfg.out_dir = overlay.out_dir;
    print_summary(dcl::run_simulation(cfg, &trace));
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed collaborative LiDAR SLAM back half"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string eval_dir, replay_dir;

  CLI::App* simulate =
      app.add_subcommand("simulate", "run a built-in scenario end to end");
  add_common(simulate, flags);
  CLI::App* run = app.add_subcommand("run", "pipeline on an ingested graph");
  add_common(run, flags);
  CLI::App* eval = app.add_subcommand("eval", "recompute reports from outputs");
  eval->add_option("dir", eval_dir, "output directory")->required();
  CLI::App* replay =
      app.add_subcommand("replay", "re-execute a run from its message trace");
  replay->add_option("dir", replay_dir, "recorded output directory")
      ->required();
  add_common(replay, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    return dispatch(app.get_subcommands().front()->get_name(), flags,
                    eval_dir, replay_dir);
  } catch (const dcl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case dcl::ErrorCode::Config:
        return 2;
      case dcl::ErrorCode::Diverged:
        return 3;
      case dcl::ErrorCode::Io:
      case dcl::ErrorCode::Parse:
      case dcl::ErrorCode::Decode:
        return 4;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
