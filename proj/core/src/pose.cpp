#include "dcl/pose.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <set>

namespace dcl {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Mat3 exp_so3(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    return Mat3::Identity() + skew(w);
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Vec3 log_so3(const Mat3& r) {
  // AngleAxis handles the near-pi branch; angle is in [0, pi].
  Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

bool rotation_drifted(const Mat3& r, double tol) {
  const double ortho = (r * r.transpose() - Mat3::Identity()).norm();
  return ortho > tol || std::abs(r.determinant() - 1.0) > tol;
}

Mat3 project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(2) < 1e-12 * std::max(1.0, svd.singularValues()(0))) {
    fail(ErrorCode::SingularProjection,
         "project_to_rotation: matrix is rank deficient");
  }
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

Mat3 kabsch_rotation(const Mat3& cross_covariance) {
  Eigen::JacobiSVD<Mat3> svd(cross_covariance,
                             Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(1) < 1e-12 * std::max(1.0, sv(0))) {
    fail(ErrorCode::DegenerateGeometry,
         "kabsch_rotation: point sets are collinear");
  }
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0
                ? -1.0
                : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  if (rotation_drifted(out.rotation)) {
    out.rotation = project_to_rotation(out.rotation);
  }
  return out;
}

Pose inverse(const Pose& a) {
  Pose out;
  out.rotation = a.rotation.transpose();
  out.translation = -(out.rotation * a.translation);
  return out;
}

Vec6 log_map(const Pose& a) {
  Vec6 v;
  v.head<3>() = log_so3(a.rotation);
  v.tail<3>() = a.translation;
  return v;
}

Pose exp_map(const Vec6& v) {
  for (int i = 0; i < 6; ++i) {
    if (!std::isfinite(v(i))) {
      fail(ErrorCode::Config, "exp_map: non-finite coordinate");
    }
  }
  Pose out;
  out.rotation = exp_so3(v.head<3>());
  out.translation = v.tail<3>();
  return out;
}

double rotation_distance(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Pose make_pose_rz(double yaw, const Vec3& t) {
  Pose p;
  p.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  p.translation = t;
  return p;
}

std::int64_t pack_key(const PoseKey& key) {
  if (key.robot_id < 0 || key.frame_index < 0 ||
      key.frame_index >= kPoseKeyStride) {
    fail(ErrorCode::Config, "pack_key: key out of range");
  }
  return static_cast<std::int64_t>(key.robot_id) * kPoseKeyStride +
         key.frame_index;
}

PoseKey unpack_key(std::int64_t id) {
  if (id < 0) {
    fail(ErrorCode::Parse, "unpack_key: negative id");
  }
  return PoseKey{static_cast<int>(id / kPoseKeyStride),
                 static_cast<int>(id % kPoseKeyStride)};
}

FactorKind infer_kind(const PoseKey& from, const PoseKey& to) {
  if (from.robot_id != to.robot_id) {
    return FactorKind::InterLoop;
  }
  return to.frame_index == from.frame_index + 1 ? FactorKind::Odometry
                                                : FactorKind::IntraLoop;
}

void validate_graph(const PoseGraph& graph) {
  std::map<int, std::set<int>> odom_from;
  for (const Factor& f : graph.factors) {
    if (!graph.nodes.count(f.from) || !graph.nodes.count(f.to)) {
      fail(ErrorCode::Parse, "graph factor references missing node");
    }
    switch (f.kind) {
      case FactorKind::Odometry:
        if (f.from.robot_id != f.to.robot_id ||
            f.to.frame_index != f.from.frame_index + 1) {
          fail(ErrorCode::Parse, "odometry factor endpoints not consecutive");
        }
        if (!odom_from[f.from.robot_id].insert(f.from.frame_index).second) {
          fail(ErrorCode::Parse, "duplicate odometry factor in chain");
        }
        break;
      case FactorKind::IntraLoop:
        if (f.from.robot_id != f.to.robot_id) {
          fail(ErrorCode::Parse, "intra-robot loop between different robots");
        }
        break;
      case FactorKind::InterLoop:
        if (f.from.robot_id == f.to.robot_id) {
          fail(ErrorCode::Parse, "inter-robot loop within one robot");
        }
        break;
    }
    const Mat6 sym = f.information - f.information.transpose();
    if (sym.cwiseAbs().maxCoeff() > 1e-12) {
      fail(ErrorCode::Parse, "information matrix not symmetric");
    }
  }
  // Odometry factors of one robot must form one chain: consecutive frame
  // indices with no gaps.
  for (const auto& [robot, froms] : odom_from) {
    if (froms.empty()) continue;
    const int lo = *froms.begin();
    const int hi = *froms.rbegin();
    if (static_cast<int>(froms.size()) != hi - lo + 1) {
      fail(ErrorCode::Parse, "odometry chain has gaps for robot " +
                                 std::to_string(robot));
    }
  }
}

}  // namespace dcl
