#pragma once

#include <string>
#include <vector>

#include "dcl/pose.hpp"

namespace dcl {

struct TumRecord {
  double timestamp = 0.0;
  Pose pose;
};

/// TUM trajectory format: "timestamp tx ty tz qx qy qz qw" per line.
void save_tum(const std::vector<TumRecord>& traj, const std::string& path);
std::vector<TumRecord> load_tum(const std::string& path);

}  // namespace dcl
