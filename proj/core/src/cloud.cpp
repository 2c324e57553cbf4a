#include "dcl/cloud.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace dcl {

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) {
    out.points.push_back(pose.apply(p));
  }
  out.intensity = cloud.intensity;
  return out;
}

PointCloud voxel_downsample(const PointCloud& cloud, double leaf) {
  if (leaf <= 0) {
    fail(ErrorCode::Config, "voxel_downsample: leaf must be positive");
  }
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  struct Cell {
    Vec3 sum = Vec3::Zero();
    int count = 0;
  };
  std::map<Key, Cell> cells;
  for (const Vec3& p : cloud.points) {
    Key k{static_cast<std::int64_t>(std::floor(p.x() / leaf)),
          static_cast<std::int64_t>(std::floor(p.y() / leaf)),
          static_cast<std::int64_t>(std::floor(p.z() / leaf))};
    Cell& c = cells[k];
    c.sum += p;
    c.count += 1;
  }
  PointCloud out;
  out.points.reserve(cells.size());
  for (const auto& [k, c] : cells) {
    out.points.push_back(c.sum / c.count);
  }
  return out;
}

PointCloud load_cloud_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::Io, "load_cloud_bin: cannot open " + path);
  }
  PointCloud out;
  float rec[4];
  while (in.read(reinterpret_cast<char*>(rec), sizeof(rec))) {
    out.points.emplace_back(rec[0], rec[1], rec[2]);
    out.intensity.push_back(rec[3]);
  }
  if (in.gcount() != 0) {
    fail(ErrorCode::Parse, "load_cloud_bin: truncated record in " + path);
  }
  return out;
}

void save_cloud_bin(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    fail(ErrorCode::Io, "save_cloud_bin: cannot open " + path);
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    float rec[4] = {static_cast<float>(cloud.points[i].x()),
                    static_cast<float>(cloud.points[i].y()),
                    static_cast<float>(cloud.points[i].z()),
                    i < cloud.intensity.size() ? cloud.intensity[i] : 0.0f};
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  }
}

PointCloud load_cloud_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorCode::Io, "load_cloud_xyz: cannot open " + path);
  }
  PointCloud out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x >> y >> z)) {
      fail(ErrorCode::Parse,
           "malformed XYZ line at " + path + ":" + std::to_string(line_no));
    }
    out.points.emplace_back(x, y, z);
    double inten;
    if (ss >> inten) {
      out.intensity.push_back(static_cast<float>(inten));
    }
  }
  return out;
}

}  // namespace dcl
