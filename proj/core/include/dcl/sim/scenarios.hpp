#pragma once

#include <string>
#include <vector>

#include "dcl/iris.hpp"
#include "dcl/sim/frontend.hpp"
#include "dcl/sim/world.hpp"

namespace dcl::sim {

struct Scenario {
  std::string name;
  World world;
  std::vector<std::vector<Pose>> trajectories;  // per robot, dt-sampled
  LidarModel lidar;
  OdometryNoise noise;
  IrisConfig iris;
  double dt = 0.1;
  double comm_range = 150.0;
  double speed = 1.5;
};

std::vector<std::string> scenario_names();

/// Built-in deterministic scenarios:
///   rendezvous2 - two robots, one shared street
///   campus3     - three overlapping rectangle loops, ~400-420 m each
///   alias3      - two identical corridors plus a genuinely shared block
///   swarm9      - nine near-coincident U trajectories, full connectivity
///   opposite2   - one street driven in opposite directions
Scenario make_scenario(const std::string& name, std::uint64_t seed);

}  // namespace dcl::sim
