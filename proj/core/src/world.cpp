#include "dcl/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "dcl/error.hpp"
#include "dcl/rng.hpp"

namespace dcl::sim {

void LidarModel::validate() const {
  if (n_rings < 1 || vertical_fov_deg <= 0 || horizontal_step_deg <= 0 ||
      max_range <= 0 || range_noise_sigma < 0) {
    fail(ErrorCode::Config, "LidarModel: values must be positive");
  }
}

World generate_world(std::uint64_t seed, const WorldSpec& spec) {
  if (spec.area <= 0) {
    fail(ErrorCode::Config, "WorldSpec: area must be positive");
  }
  World world;
  world.seed = seed;
  world.half_extent = spec.area * 2.0;
  Rng rng(mix_seed(seed, 0xB0D1E5));
  const int grid = std::max(1, static_cast<int>(std::ceil(
                                   std::sqrt(static_cast<double>(
                                       std::max(spec.n_buildings, 1))))));
  const double cell = spec.area / grid;
  int placed = 0;
  for (int gy = 0; gy < grid && placed < spec.n_buildings; ++gy) {
    for (int gx = 0; gx < grid && placed < spec.n_buildings; ++gx) {
      const double cx =
          -spec.area / 2 + (gx + 0.5) * cell + rng.uniform(-0.12, 0.12) * cell;
      const double cy =
          -spec.area / 2 + (gy + 0.5) * cell + rng.uniform(-0.12, 0.12) * cell;
      const double wx = cell * rng.uniform(0.22, 0.45);
      const double wy = cell * rng.uniform(0.22, 0.45);
      const double h = rng.uniform(2.5, 11.0);
      world.boxes.push_back(
          Box{Vec3(cx - wx, cy - wy, 0.0), Vec3(cx + wx, cy + wy, h)});
      ++placed;
      // Rooftop setback so skylines differ between similar footprints.
      if (rng.uniform() < 0.5) {
        world.boxes.push_back(Box{Vec3(cx - wx * 0.4, cy - wy * 0.4, h),
                                  Vec3(cx + wx * 0.4, cy + wy * 0.4,
                                       h + rng.uniform(1.0, 3.0))});
      }
      // Trees along the street sides of the building.
      const int trees = rng.uniform_int(1, 3);
      for (int t = 0; t < trees; ++t) {
        Cylinder c;
        c.x = cx + rng.uniform(-1.4, 1.4) * wx;
        c.y = cy + (rng.uniform() < 0.5 ? -1 : 1) * (wy + rng.uniform(1.0, 3.5));
        c.radius = rng.uniform(0.15, 0.5);
        c.z_max = rng.uniform(1.5, 6.0);
        world.cylinders.push_back(c);
      }
    }
  }
  // Street clutter: parked-car and bin sized boxes scattered over the
  // populated square give each street segment its own signature.
  const int n_clutter = spec.n_buildings * 5;
  for (int i = 0; i < n_clutter; ++i) {
    const double cx = rng.uniform(-spec.area / 2, spec.area / 2);
    const double cy = rng.uniform(-spec.area / 2, spec.area / 2);
    const double wx = rng.uniform(0.2, 1.2);
    const double wy = rng.uniform(0.2, 1.2);
    const double h = rng.uniform(0.4, 1.8);
    world.boxes.push_back(
        Box{Vec3(cx - wx, cy - wy, 0.0), Vec3(cx + wx, cy + wy, h)});
  }
  if (spec.alias_pair) {
    // Two identical corridors far apart: same wall geometry, translated.
    const double off = spec.area * 0.9;
    for (double sign : {-1.0, 1.0}) {
      const double base_x = sign * off;
      const double base_y = -off;
      world.boxes.push_back(Box{Vec3(base_x - 2.5, base_y - 30.0, 0.0),
                                Vec3(base_x - 1.5, base_y + 30.0, 5.0)});
      world.boxes.push_back(Box{Vec3(base_x + 1.5, base_y - 30.0, 0.0),
                                Vec3(base_x + 2.5, base_y + 30.0, 5.0)});
      world.boxes.push_back(Box{Vec3(base_x - 2.5, base_y + 30.0, 0.0),
                                Vec3(base_x + 2.5, base_y + 31.0, 4.0)});
    }
  }
  return world;
}

namespace {

// Slab test; returns smallest positive t or negative for a miss.
double ray_box(const Vec3& o, const Vec3& d, const Box& b) {
  double t_lo = 0.0;
  double t_hi = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(d(axis)) < 1e-15) {
      if (o(axis) < b.min(axis) || o(axis) > b.max(axis)) return -1.0;
      continue;
    }
    double t0 = (b.min(axis) - o(axis)) / d(axis);
    double t1 = (b.max(axis) - o(axis)) / d(axis);
    if (t0 > t1) std::swap(t0, t1);
    t_lo = std::max(t_lo, t0);
    t_hi = std::min(t_hi, t1);
    if (t_lo > t_hi) return -1.0;
  }
  return t_lo > 1e-9 ? t_lo : -1.0;
}

double ray_cylinder(const Vec3& o, const Vec3& d, const Cylinder& c) {
  const double ox = o.x() - c.x;
  const double oy = o.y() - c.y;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a < 1e-15) return -1.0;
  const double b = 2.0 * (ox * d.x() + oy * d.y());
  const double q = ox * ox + oy * oy - c.radius * c.radius;
  const double disc = b * b - 4.0 * a * q;
  if (disc < 0) return -1.0;
  const double sq = std::sqrt(disc);
  for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
    if (t > 1e-9) {
      const double z = o.z() + t * d.z();
      if (z >= c.z_min && z <= c.z_max) return t;
    }
  }
  return -1.0;
}

}  // namespace

double ray_hit(const World& world, const Vec3& origin, const Vec3& dir,
               double max_range) {
  double best = -1.0;
  for (const Box& b : world.boxes) {
    const double t = ray_box(origin, dir, b);
    if (t > 0 && t <= max_range && (best < 0 || t < best)) best = t;
  }
  for (const Cylinder& c : world.cylinders) {
    const double t = ray_cylinder(origin, dir, c);
    if (t > 0 && t <= max_range && (best < 0 || t < best)) best = t;
  }
  return best;
}

PointCloud raycast_scan(const World& world, const Pose& true_pose,
                        const LidarModel& model, std::uint64_t seed) {
  model.validate();
  PointCloud scan;
  Rng rng(mix_seed(seed, 0x5CA9));
  const int n_az =
      static_cast<int>(std::round(360.0 / model.horizontal_step_deg));
  const double az_step = 2.0 * M_PI / n_az;
  const double fov = model.vertical_fov_deg * M_PI / 180.0;
  const double elev_lo = -fov / 2.0;
  const double elev_step =
      model.n_rings > 1 ? fov / (model.n_rings - 1) : 0.0;
  for (int ring = 0; ring < model.n_rings; ++ring) {
    const double elev = elev_lo + ring * elev_step;
    const double ce = std::cos(elev);
    const double se = std::sin(elev);
    for (int k = 0; k < n_az; ++k) {
      const double az = (k + 0.5) * az_step - M_PI;
      const Vec3 dir_sensor(ce * std::cos(az), ce * std::sin(az), se);
      const Vec3 dir_world = true_pose.rotation * dir_sensor;
      const double t =
          ray_hit(world, true_pose.translation, dir_world, model.max_range);
      if (t <= 0) continue;
      const double noisy = model.range_noise_sigma > 0
                               ? t + model.range_noise_sigma * rng.normal()
                               : t;
      if (noisy <= 0 || noisy > model.max_range) continue;
      scan.points.push_back(noisy * dir_sensor);
    }
  }
  return scan;
}

}  // namespace dcl::sim
