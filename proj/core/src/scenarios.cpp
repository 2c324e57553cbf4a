#include "dcl/sim/scenarios.hpp"

#include <algorithm>

#include "dcl/error.hpp"

namespace dcl::sim {
namespace {

constexpr double kTurnRate = 0.8;  // rad/s
constexpr double kSensorZ = 1.2;   // meters

std::vector<Vec3> rectangle(double x0, double y0, double x1, double y1) {
  return {Vec3(x0, y0, kSensorZ), Vec3(x1, y0, kSensorZ),
          Vec3(x1, y1, kSensorZ), Vec3(x0, y1, kSensorZ),
          Vec3(x0, y0, kSensorZ)};
}

Scenario base_scenario(const std::string& name, std::uint64_t seed) {
  Scenario s;
  s.name = name;
  s.lidar.horizontal_step_deg = 0.5;
  s.noise.trans_sigma_per_m = 0.02;
  s.noise.rot_sigma_per_rad = 0.02;
  s.noise.rot_sigma_per_m = 0.0015;
  s.noise.yaw_bias_rate = 0.0002;
  s.world = generate_world(seed, WorldSpec{});
  return s;
}

}  // namespace

std::vector<std::string> scenario_names() {
  return {"rendezvous2", "campus3", "alias3", "swarm9", "opposite2"};
}

Scenario make_scenario(const std::string& name, std::uint64_t seed) {
  Scenario s = base_scenario(name, seed);
  const double dt = s.dt;
  if (name == "rendezvous2") {
    WorldSpec spec;
    spec.n_buildings = 8;
    spec.area = 70.0;
    s.world = generate_world(seed, spec);
    s.comm_range = 100.0;
    s.iris.r_max = 50.0;
    // Two block loops sharing the y=0 street, driven in opposite directions.
    s.trajectories.push_back(waypoint_trajectory(
        rectangle(-25.0, -25.0, 25.0, 0.0), s.speed, kTurnRate, dt));
    std::vector<Vec3> upper = rectangle(-25.0, 0.0, 25.0, 25.0);
    std::reverse(upper.begin(), upper.end());
    s.trajectories.push_back(
        waypoint_trajectory(upper, s.speed, kTurnRate, dt));
  } else if (name == "campus3") {
    WorldSpec spec;
    spec.n_buildings = 14;
    spec.area = 120.0;
    s.world = generate_world(seed, spec);
    s.comm_range = 150.0;
    s.trajectories.push_back(waypoint_trajectory(
        rectangle(-60.0, -60.0, 60.0, 30.0), s.speed, kTurnRate, dt));
    s.trajectories.push_back(waypoint_trajectory(
        rectangle(-60.0, -30.0, 60.0, 60.0), s.speed, kTurnRate, dt));
    s.trajectories.push_back(waypoint_trajectory(
        rectangle(-20.0, -60.0, 60.0, 60.0), s.speed, kTurnRate, dt));
  } else if (name == "alias3") {
    WorldSpec spec;
    spec.n_buildings = 10;
    spec.area = 120.0;
    spec.alias_pair = true;
    s.world = generate_world(seed, spec);
    s.comm_range = 400.0;
    const double off = spec.area * 0.9;  // corridor centers at +-108
    // Robots 0 and 1 first drive the two identical corridors, then share a
    // long genuine rectangle with each other and with robot 2.
    std::vector<Vec3> r0{Vec3(-off, -off - 15.0, kSensorZ),
                         Vec3(-off, -off + 15.0, kSensorZ),
                         Vec3(0.0, -30.0, kSensorZ), Vec3(0.0, 0.0, kSensorZ),
                         Vec3(60.0, 0.0, kSensorZ), Vec3(60.0, 60.0, kSensorZ),
                         Vec3(0.0, 60.0, kSensorZ), Vec3(0.0, 0.0, kSensorZ)};
    std::vector<Vec3> r1{Vec3(off, -off - 15.0, kSensorZ),
                         Vec3(off, -off + 15.0, kSensorZ),
                         Vec3(0.0, -30.0, kSensorZ), Vec3(0.0, 0.0, kSensorZ),
                         Vec3(60.0, 0.0, kSensorZ), Vec3(60.0, 60.0, kSensorZ),
                         Vec3(0.0, 60.0, kSensorZ), Vec3(0.0, 0.0, kSensorZ)};
    std::vector<Vec3> r2{Vec3(-60.0, 60.0, kSensorZ), Vec3(0.0, 60.0, kSensorZ),
                         Vec3(0.0, 0.0, kSensorZ), Vec3(-60.0, 0.0, kSensorZ),
                         Vec3(-60.0, 60.0, kSensorZ)};
    s.trajectories.push_back(waypoint_trajectory(r0, s.speed, kTurnRate, dt));
    s.trajectories.push_back(waypoint_trajectory(r1, s.speed, kTurnRate, dt));
    s.trajectories.push_back(waypoint_trajectory(r2, s.speed, kTurnRate, dt));
  } else if (name == "swarm9") {
    WorldSpec spec;
    spec.n_buildings = 12;
    spec.area = 130.0;
    s.world = generate_world(seed, spec);
    s.comm_range = 1e9;  // full connectivity, as in the nine-robot experiment
    for (int k = 0; k < 9; ++k) {
      const double lane = 0.25 * k;
      std::vector<Vec3> u{Vec3(-60.0, -20.0 + lane, kSensorZ),
                          Vec3(60.0, -20.0 + lane, kSensorZ),
                          Vec3(60.0, 20.0 + lane, kSensorZ),
                          Vec3(-60.0, 20.0 + lane, kSensorZ)};
      s.trajectories.push_back(waypoint_trajectory(u, s.speed, kTurnRate, dt));
    }
  } else if (name == "opposite2") {
    WorldSpec spec;
    spec.n_buildings = 10;
    spec.area = 100.0;
    s.world = generate_world(seed, spec);
    s.comm_range = 150.0;
    s.iris.r_max = 60.0;
    s.trajectories.push_back(waypoint_trajectory(
        {Vec3(-40.0, 0.0, kSensorZ), Vec3(40.0, 0.0, kSensorZ)}, s.speed,
        kTurnRate, dt));
    s.trajectories.push_back(waypoint_trajectory(
        {Vec3(40.0, 1.5, kSensorZ), Vec3(-40.0, 1.5, kSensorZ)}, s.speed,
        kTurnRate, dt));
  } else {
    fail(ErrorCode::Config, "unknown scenario: " + name);
  }
  return s;
}

}  // namespace dcl::sim
