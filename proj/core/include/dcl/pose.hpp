#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <map>
#include <vector>

#include "dcl/error.hpp"

namespace dcl {

using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Rigid transform in 3-D. rotation is special orthogonal, translation in
/// meters. Value type, cheap to copy.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& a);

/// Decoupled se(3)-style coordinates: first three entries are the rotation
/// vector (principal branch, angle <= pi), last three the translation.
Vec6 log_map(const Pose& a);
Pose exp_map(const Vec6& v);

Mat3 exp_so3(const Vec3& w);
Vec3 log_so3(const Mat3& r);
Mat3 skew(const Vec3& v);

/// Geodesic angle between two rotations, radians in [0, pi].
double rotation_distance(const Mat3& a, const Mat3& b);

/// Nearest special-orthogonal matrix in Frobenius norm (SVD with determinant
/// sign fix). Throws SingularProjection when m is rank deficient.
Mat3 project_to_rotation(const Mat3& m);

/// Rotation from a rigid-fit cross covariance. Rank 2 is fine (planar point
/// sets); throws DegenerateGeometry below that.
Mat3 kabsch_rotation(const Mat3& cross_covariance);

/// True when rotation * rotation^T deviates from identity or det from +1 by
/// more than tol (Frobenius).
bool rotation_drifted(const Mat3& r, double tol = 1e-9);

Pose make_pose_rz(double yaw, const Vec3& t = Vec3::Zero());

/// Identity of one robot pose: which robot and which keyframe ordinal.
struct PoseKey {
  int robot_id = 0;
  int frame_index = 0;

  auto operator<=>(const PoseKey&) const = default;
};

/// Packing used by multi-robot g2o files and wire formats.
constexpr std::int64_t kPoseKeyStride = 10'000'000;
std::int64_t pack_key(const PoseKey& key);
PoseKey unpack_key(std::int64_t id);

enum class FactorKind { Odometry, IntraLoop, InterLoop };

/// Relative-pose measurement between two keyframes. measurement maps points
/// in `to`'s frame into `from`'s frame (z = from^-1 * to). information is a
/// 6x6 SPD matrix ordered rotation block first, then translation.
struct Factor {
  PoseKey from;
  PoseKey to;
  Pose measurement;
  Mat6 information = default_information();
  FactorKind kind = FactorKind::Odometry;

  static Mat6 default_information() {
    Mat6 info = Mat6::Identity() * 100.0;
    return info;
  }
};

/// Kind implied by the endpoints: same robot consecutive -> Odometry, same
/// robot otherwise -> IntraLoop, different robots -> InterLoop.
FactorKind infer_kind(const PoseKey& from, const PoseKey& to);

struct PoseGraph {
  std::map<PoseKey, Pose> nodes;
  std::vector<Factor> factors;
};

/// Checks endpoint presence, per-kind invariants and that odometry factors of
/// each robot form a single chain. Throws on violation.
void validate_graph(const PoseGraph& graph);

}  // namespace dcl
