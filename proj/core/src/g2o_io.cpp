#include "dcl/g2o_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dcl {
namespace {

// g2o orders pose coordinates translation-first; internal order is
// rotation-first. map[g2o_index] = internal_index.
constexpr std::array<int, 6> kG2oToInternal = {3, 4, 5, 0, 1, 2};

// Fixed decimal places rather than significant digits: the printed value is
// a 1e-12 grid point, so print(parse(print(x))) is stable and a second save
// of a loaded graph reproduces the file byte for byte.
std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12f", v);
  return buf;
}

Eigen::Quaterniond canonical_quat(const Mat3& r) {
  Eigen::Quaterniond q(r);
  // Sign fix keyed to the first near-maximal component; the largest component
  // is at least 1/2, so its sign cannot flip under roundtrip roundoff.
  const double coeffs[4] = {q.w(), q.x(), q.y(), q.z()};
  double max_abs = 0.0;
  for (double c : coeffs) max_abs = std::max(max_abs, std::abs(c));
  for (double c : coeffs) {
    if (std::abs(c) >= max_abs - 1e-9) {
      if (c < 0) q.coeffs() *= -1.0;
      break;
    }
  }
  return q;
}

Eigen::Quaterniond parse_quat(double qx, double qy, double qz, double qw,
                              const std::string& where) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  const double n = q.norm();
  if (n < 1e-9) {
    fail(ErrorCode::Parse, "zero quaternion at " + where);
  }
  // Keep our own near-unit output bit-stable; normalize only sloppy inputs.
  if (std::abs(n - 1.0) > 1e-9) {
    q.normalize();
  }
  return q;
}

}  // namespace

G2oLoadResult load_g2o(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorCode::Io, "load_g2o: cannot open " + path);
  }
  G2oLoadResult out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag.empty() || tag[0] == '#') {
      continue;
    }
    const std::string where = path + ":" + std::to_string(line_no);
    if (tag == "VERTEX_SE3:QUAT") {
      std::int64_t id;
      double x, y, z, qx, qy, qz, qw;
      if (!(ss >> id >> x >> y >> z >> qx >> qy >> qz >> qw)) {
        fail(ErrorCode::Parse, "malformed vertex at " + where);
      }
      Pose p;
      p.rotation = parse_quat(qx, qy, qz, qw, where).toRotationMatrix();
      p.translation = Vec3(x, y, z);
      out.graph.nodes[unpack_key(id)] = p;
    } else if (tag == "EDGE_SE3:QUAT") {
      std::int64_t id1, id2;
      double x, y, z, qx, qy, qz, qw;
      if (!(ss >> id1 >> id2 >> x >> y >> z >> qx >> qy >> qz >> qw)) {
        fail(ErrorCode::Parse, "malformed edge at " + where);
      }
      Factor f;
      f.from = unpack_key(id1);
      f.to = unpack_key(id2);
      f.measurement.rotation =
          parse_quat(qx, qy, qz, qw, where).toRotationMatrix();
      f.measurement.translation = Vec3(x, y, z);
      std::vector<double> info;
      double v;
      while (ss >> v) {
        info.push_back(v);
      }
      if (info.size() == 21) {
        Mat6 m;
        int k = 0;
        for (int i = 0; i < 6; ++i) {
          for (int j = i; j < 6; ++j) {
            m(kG2oToInternal[i], kG2oToInternal[j]) = info[k];
            m(kG2oToInternal[j], kG2oToInternal[i]) = info[k];
            ++k;
          }
        }
        f.information = m;
      } else if (!info.empty()) {
        fail(ErrorCode::Parse, "edge with " + std::to_string(info.size()) +
                                   " information entries at " + where);
      }
      f.kind = infer_kind(f.from, f.to);
      out.graph.factors.push_back(f);
    } else {
      ++out.skipped_unknown_tags;
    }
  }
  return out;
}

void save_g2o(const PoseGraph& graph, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::Io, "save_g2o: cannot open " + path);
  }
  for (const auto& [key, pose] : graph.nodes) {
    const Eigen::Quaterniond q = canonical_quat(pose.rotation);
    out << "VERTEX_SE3:QUAT " << pack_key(key) << ' '
        << fmt(pose.translation.x()) << ' ' << fmt(pose.translation.y()) << ' '
        << fmt(pose.translation.z()) << ' ' << fmt(q.x()) << ' ' << fmt(q.y())
        << ' ' << fmt(q.z()) << ' ' << fmt(q.w()) << '\n';
  }
  for (const Factor& f : graph.factors) {
    const Eigen::Quaterniond q = canonical_quat(f.measurement.rotation);
    out << "EDGE_SE3:QUAT " << pack_key(f.from) << ' ' << pack_key(f.to) << ' '
        << fmt(f.measurement.translation.x()) << ' '
        << fmt(f.measurement.translation.y()) << ' '
        << fmt(f.measurement.translation.z()) << ' ' << fmt(q.x()) << ' '
        << fmt(q.y()) << ' ' << fmt(q.z()) << ' ' << fmt(q.w());
    for (int i = 0; i < 6; ++i) {
      for (int j = i; j < 6; ++j) {
        out << ' ' << fmt(f.information(kG2oToInternal[i], kG2oToInternal[j]));
      }
    }
    out << '\n';
  }
}

}  // namespace dcl
