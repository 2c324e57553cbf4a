#pragma once

#include <string>

#include "dcl/pose.hpp"

namespace dcl {

struct G2oLoadResult {
  PoseGraph graph;
  int skipped_unknown_tags = 0;
};

/// Reads VERTEX_SE3:QUAT / EDGE_SE3:QUAT records. Vertex ids are unpacked as
/// robot_id * 1e7 + frame_index; factor kinds are inferred from endpoints.
/// Edges without information entries get the default information matrix.
/// Malformed lines raise a Parse error carrying the line number; unknown tags
/// are skipped and counted.
G2oLoadResult load_g2o(const std::string& path);

void save_g2o(const PoseGraph& graph, const std::string& path);

}  // namespace dcl
