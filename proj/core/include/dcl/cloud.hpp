#pragma once

#include <string>
#include <vector>

#include "dcl/pose.hpp"

namespace dcl {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<float> intensity;  // optional, empty or same size as points

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

/// One centroid per occupied voxel, output ordered by voxel index.
PointCloud voxel_downsample(const PointCloud& cloud, double leaf);

/// KITTI-style packed binary: f32 x,y,z,intensity per point.
PointCloud load_cloud_bin(const std::string& path);
void save_cloud_bin(const PointCloud& cloud, const std::string& path);

/// Whitespace separated "x y z [intensity]" lines.
PointCloud load_cloud_xyz(const std::string& path);

}  // namespace dcl
