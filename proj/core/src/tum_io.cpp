#include "dcl/tum_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dcl {

void save_tum(const std::vector<TumRecord>& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::Io, "save_tum: cannot open " + path);
  }
  char buf[256];
  for (const TumRecord& rec : traj) {
    Eigen::Quaterniond q(rec.pose.rotation);
    q.normalize();
    if (q.w() < 0) q.coeffs() *= -1.0;
    std::snprintf(buf, sizeof(buf),
                  "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", rec.timestamp,
                  rec.pose.translation.x(), rec.pose.translation.y(),
                  rec.pose.translation.z(), q.x(), q.y(), q.z(), q.w());
    out << buf;
  }
}

std::vector<TumRecord> load_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorCode::Io, "load_tum: cannot open " + path);
  }
  std::vector<TumRecord> traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    TumRecord rec;
    double qx, qy, qz, qw;
    if (!(ss >> rec.timestamp >> rec.pose.translation.x() >>
          rec.pose.translation.y() >> rec.pose.translation.z() >> qx >> qy >>
          qz >> qw)) {
      fail(ErrorCode::Parse,
           "malformed TUM line at " + path + ":" + std::to_string(line_no));
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    q.normalize();
    rec.pose.rotation = q.toRotationMatrix();
    traj.push_back(rec);
  }
  return traj;
}

}  // namespace dcl
