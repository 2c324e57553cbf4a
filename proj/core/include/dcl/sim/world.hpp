#pragma once

#include <cstdint>
#include <vector>

#include "dcl/cloud.hpp"
#include "dcl/pose.hpp"

namespace dcl::sim {

struct Box {
  Vec3 min;
  Vec3 max;
};

struct Cylinder {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.5;
  double z_min = 0.0;
  double z_max = 4.0;
};

struct World {
  std::vector<Box> boxes;
  std::vector<Cylinder> cylinders;
  double half_extent = 200.0;  // bounds, meters
  std::uint64_t seed = 0;
};

struct WorldSpec {
  int n_buildings = 12;
  double area = 120.0;  // side length of the populated square, meters
  bool alias_pair = false;  // add two geometrically identical corridors
};

/// Deterministic primitive world: gridded buildings with jittered footprints
/// and heights, plus cylinder landmarks. alias_pair adds two translated
/// copies of one corridor for perceptual-aliasing tests.
World generate_world(std::uint64_t seed, const WorldSpec& spec);

struct LidarModel {
  int n_rings = 16;
  double vertical_fov_deg = 30.0;    // total, symmetric about horizontal
  double horizontal_step_deg = 0.2;
  double max_range = 100.0;
  double range_noise_sigma = 0.02;   // meters

  void validate() const;
};

/// Closest-hit distance along a ray, or a negative value for a miss.
double ray_hit(const World& world, const Vec3& origin, const Vec3& dir,
               double max_range);

/// One revolution of closest-hit samples with Gaussian range noise, points
/// in the sensor frame. Azimuth samples sit at half-step offsets so exact
/// 1-degree yaw rotations never land on bin boundaries.
PointCloud raycast_scan(const World& world, const Pose& true_pose,
                        const LidarModel& model, std::uint64_t seed);

}  // namespace dcl::sim
