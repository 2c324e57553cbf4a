#include "dcl/dgs.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>

namespace dcl {

void DgsConfig::validate() const {
  if (max_outer_iterations < 1 || rotation_tol <= 0 || pose_tol <= 0 ||
      max_inner_sweeps < 1) {
    fail(ErrorCode::Config, "DgsConfig: values must be positive");
  }
}

namespace {

double rotation_weight(const Mat6& info) {
  return info.topLeftCorner<3, 3>().trace() / 3.0;
}

struct FactorLin {
  Mat6 j_from;
  Mat6 j_to;
  Vec6 residual;
};

FactorLin linearize_factor(const Factor& f, const Pose& xi, const Pose& xj) {
  FactorLin out;
  const Mat3& ri = xi.rotation;
  const Mat3& rj = xj.rotation;
  const Vec3 v = ri.transpose() * (xj.translation - xi.translation);
  out.residual.head<3>() =
      log_so3(f.measurement.rotation.transpose() * ri.transpose() * rj);
  out.residual.tail<3>() = v - f.measurement.translation;
  out.j_from.setZero();
  out.j_from.topLeftCorner<3, 3>() = -(rj.transpose() * ri);
  out.j_from.bottomLeftCorner<3, 3>() = skew(v);
  out.j_from.bottomRightCorner<3, 3>() = -ri.transpose();
  out.j_to.setZero();
  out.j_to.topLeftCorner<3, 3>() = Mat3::Identity();
  out.j_to.bottomRightCorner<3, 3>() = ri.transpose();
  return out;
}

Pose retract(const Pose& x, const Vec6& delta) {
  Pose out;
  out.rotation = x.rotation * exp_so3(delta.head<3>());
  out.translation = x.translation + delta.tail<3>();
  if (rotation_drifted(out.rotation)) {
    out.rotation = project_to_rotation(out.rotation);
  }
  return out;
}

}  // namespace

std::vector<int> compute_optimization_order(const std::vector<Factor>& inter,
                                            int local_robot) {
  std::map<int, int> parent;
  std::function<int(int)> find = [&](int x) {
    parent.emplace(x, x);
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  find(local_robot);
  for (const Factor& f : inter) {
    unite(f.from.robot_id, f.to.robot_id);
  }
  std::vector<int> out;
  const int root = find(local_robot);
  for (const auto& [robot, p] : parent) {
    if (find(robot) == root) out.push_back(robot);
  }
  std::sort(out.begin(), out.end());
  return out;
}

int RobotSolver::local_index(const PoseKey& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? -1 : it->second;
}

RobotSolver::RobotSolver(int robot_id, const PoseGraph& local,
                         const std::map<PoseKey, Pose>& initial, Gauge gauge,
                         double ghost_prior_weight)
    : robot_(robot_id), gauge_(gauge), ghost_weight_(ghost_prior_weight) {
  for (const auto& [key, pose] : local.nodes) {
    if (key.robot_id != robot_) continue;
    index_[key] = static_cast<int>(keys_.size());
    keys_.push_back(key);
    auto it = initial.find(key);
    estimate_.push_back(it != initial.end() ? it->second : pose);
  }
  if (keys_.empty()) {
    fail(ErrorCode::Config, "RobotSolver: no local poses");
  }
  factors_ = local.factors;
  if (gauge_ == Gauge::Hard) anchor_index_ = 0;
  incident_.assign(keys_.size(), {});
  for (int f = 0; f < static_cast<int>(factors_.size()); ++f) {
    const int i = local_index(factors_[f].from);
    const int j = local_index(factors_[f].to);
    if (i >= 0) incident_[i].push_back(f);
    if (j >= 0 && j != i) incident_[j].push_back(f);
  }
  // Ghost variables: remote poses referenced by boundary factors.
  for (const Factor& f : factors_) {
    for (const PoseKey& key : {f.from, f.to}) {
      if (key.robot_id != robot_ && !ghost_index_.count(key)) {
        ghost_index_[key] = static_cast<int>(ghost_keys_.size());
        ghost_keys_.push_back(key);
      }
    }
  }
  if (std::getenv("DCL_GHOST_W")) {
    ghost_weight_ = std::atof(std::getenv("DCL_GHOST_W"));
  }
}

int RobotSolver::ghost_slot(const PoseKey& key) const {
  auto it = ghost_index_.find(key);
  return it == ghost_index_.end() ? -1 : it->second;
}

std::set<int> RobotSolver::neighbor_robots() const {
  std::set<int> out;
  for (const Factor& f : factors_) {
    if (f.from.robot_id != robot_) out.insert(f.from.robot_id);
    if (f.to.robot_id != robot_) out.insert(f.to.robot_id);
  }
  return out;
}

std::vector<PoseKey> RobotSolver::separators_for(int peer) const {
  std::set<PoseKey> keys;
  for (const Factor& f : factors_) {
    if (f.from.robot_id == robot_ && f.to.robot_id == peer) {
      keys.insert(f.from);
    } else if (f.to.robot_id == robot_ && f.from.robot_id == peer) {
      keys.insert(f.to);
    }
  }
  return {keys.begin(), keys.end()};
}

void RobotSolver::set_neighbor_pose(const PoseKey& key, const Pose& pose) {
  neighbor_pose_[key] = pose;
}

void RobotSolver::set_neighbor_rotation(const PoseKey& key,
                                        const Mat3& relaxed) {
  neighbor_relaxed_[key] = relaxed;
}

void RobotSolver::set_neighbor_correction(const PoseKey& key,
                                          const Vec6& correction) {
  neighbor_delta_[key] = correction;
}

int RobotSolver::free_count(int index) const {
  return anchor_index_ >= 0 && index > anchor_index_ ? index - 1 : index;
}

void RobotSolver::begin_rotation_stage() {
  relaxed_.clear();
  for (const Pose& p : estimate_) relaxed_.push_back(p.rotation);
  neighbor_relaxed_.clear();
  for (const auto& [key, pose] : neighbor_pose_) {
    neighbor_relaxed_[key] = pose.rotation;
  }
  ghost_relaxed_.assign(ghost_keys_.size(), Mat3::Identity());
  for (std::size_t g = 0; g < ghost_keys_.size(); ++g) {
    auto it = neighbor_relaxed_.find(ghost_keys_[g]);
    if (it != neighbor_relaxed_.end()) ghost_relaxed_[g] = it->second;
  }
  // Assemble and factorize the local chordal system (own poses plus ghost
  // copies of the remote separators) once per stage; only the right-hand
  // side moves between rounds.
  const int n_own =
      static_cast<int>(keys_.size()) - (anchor_index_ >= 0 ? 1 : 0);
  const int n_var = n_own + static_cast<int>(ghost_keys_.size());
  rot_solver_.reset();
  if (n_var == 0) return;
  // Variable slot: own free poses first, then ghosts. -1 marks the anchor.
  auto slot_of = [&](const PoseKey& key) {
    const int i = local_index(key);
    if (i >= 0) {
      return i == anchor_index_ ? -1 : free_count(i);
    }
    return n_own + ghost_slot(key);
  };
  std::vector<Eigen::Triplet<double>> trips;
  auto add_block = [&](int a, int b, const Mat3& m) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (m(r, c) != 0.0) {
          trips.emplace_back(3 * a + r, 3 * b + c, m(r, c));
        }
      }
    }
  };
  for (const Factor& f : factors_) {
    const double w = rotation_weight(f.information);
    const int si = slot_of(f.from);
    const int sj = slot_of(f.to);
    const Mat3& rm = f.measurement.rotation;
    if (si >= 0) add_block(si, si, w * Mat3::Identity());
    if (sj >= 0) add_block(sj, sj, w * Mat3::Identity());
    if (si >= 0 && sj >= 0) {
      add_block(si, sj, -w * rm);
      add_block(sj, si, -w * rm.transpose());
    }
  }
  for (std::size_t g = 0; g < ghost_keys_.size(); ++g) {
    add_block(n_own + static_cast<int>(g), n_own + static_cast<int>(g),
              ghost_weight_ * Mat3::Identity());
  }
  Eigen::SparseMatrix<double> h(3 * n_var, 3 * n_var);
  h.setFromTriplets(trips.begin(), trips.end());
  rot_solver_ = std::make_unique<SparseSolver>();
  rot_solver_->compute(h);
  if (rot_solver_->info() != Eigen::Success) {
    if (anchor_index_ < 0 && neighbor_pose_.empty()) {
      fail(ErrorCode::NoAnchor,
           "rotation stage: isolated block without anchor");
    }
    fail(ErrorCode::SingularProjection,
         "rotation stage: singular local system");
  }
}

double RobotSolver::rotation_round() {
  if (anchor_index_ < 0 && neighbor_pose_.empty()) {
    fail(ErrorCode::NoAnchor, "rotation_round: isolated block without anchor");
  }
  if (!rot_solver_) return 0.0;
  const int n_own =
      static_cast<int>(keys_.size()) - (anchor_index_ >= 0 ? 1 : 0);
  const int n_var = n_own + static_cast<int>(ghost_keys_.size());
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(3 * n_var, 3);
  // Anchor terms (the only fixed variable).
  if (anchor_index_ >= 0) {
    const Mat3& anchor_rot = estimate_[anchor_index_].rotation;
    const PoseKey anchor_key = keys_[anchor_index_];
    for (const Factor& f : factors_) {
      const double w = rotation_weight(f.information);
      const Mat3& rm = f.measurement.rotation;
      if (f.from == anchor_key) {
        const int sj = local_index(f.to) >= 0
                           ? (local_index(f.to) == anchor_index_
                                  ? -1
                                  : free_count(local_index(f.to)))
                           : n_own + ghost_slot(f.to);
        if (sj >= 0) {
          for (int r = 0; r < 3; ++r) {
            rhs.block<3, 1>(3 * sj, r) +=
                w * rm.transpose() * anchor_rot.row(r).transpose();
          }
        }
      } else if (f.to == anchor_key) {
        const int si = local_index(f.from) >= 0
                           ? (local_index(f.from) == anchor_index_
                                  ? -1
                                  : free_count(local_index(f.from)))
                           : n_own + ghost_slot(f.from);
        if (si >= 0) {
          for (int r = 0; r < 3; ++r) {
            rhs.block<3, 1>(3 * si, r) +=
                w * rm * anchor_rot.row(r).transpose();
          }
        }
      }
    }
  }
  // Ghost priors centered on the latest received separator values.
  for (std::size_t g = 0; g < ghost_keys_.size(); ++g) {
    const Mat3* target = &ghost_relaxed_[g];
    auto it = neighbor_relaxed_.find(ghost_keys_[g]);
    if (it != neighbor_relaxed_.end()) target = &it->second;
    for (int r = 0; r < 3; ++r) {
      rhs.block<3, 1>(3 * (n_own + static_cast<int>(g)), r) +=
          ghost_weight_ * target->row(r).transpose();
    }
  }
  const Eigen::MatrixXd sol = rot_solver_->solve(rhs);
  double change_sq = 0.0;
  for (int i = 0; i < static_cast<int>(keys_.size()); ++i) {
    if (i == anchor_index_) continue;
    Mat3 updated;
    for (int r = 0; r < 3; ++r) {
      updated.row(r) = sol.block<3, 1>(3 * free_count(i), r).transpose();
    }
    change_sq += (updated - relaxed_[i]).squaredNorm();
    relaxed_[i] = updated;
  }
  for (std::size_t g = 0; g < ghost_keys_.size(); ++g) {
    for (int r = 0; r < 3; ++r) {
      ghost_relaxed_[g].row(r) =
          sol.block<3, 1>(3 * (n_own + static_cast<int>(g)), r).transpose();
    }
  }
  return std::sqrt(change_sq);
}

double RobotSolver::rotation_sweep() {
  if (anchor_index_ < 0 && neighbor_pose_.empty()) {
    fail(ErrorCode::NoAnchor, "rotation_sweep: isolated block without anchor");
  }
  double change_sq = 0.0;
  for (int i = 0; i < static_cast<int>(keys_.size()); ++i) {
    if (i == anchor_index_) continue;
    const PoseKey& key = keys_[i];
    Mat3 accum = Mat3::Zero();
    double weight = 0.0;
    for (int fi : incident_[i]) {
      const Factor& f = factors_[fi];
      if (f.from == key) {
        const Mat3* other = nullptr;
        const int j = local_index(f.to);
        if (j >= 0) {
          other = &relaxed_[j];
        } else {
          auto it = neighbor_relaxed_.find(f.to);
          if (it == neighbor_relaxed_.end()) continue;
          other = &it->second;
        }
        const double w = rotation_weight(f.information);
        accum += w * (*other) * f.measurement.rotation.transpose();
        weight += w;
      } else if (f.to == key) {
        const Mat3* other = nullptr;
        const int j = local_index(f.from);
        if (j >= 0) {
          other = &relaxed_[j];
        } else {
          auto it = neighbor_relaxed_.find(f.from);
          if (it == neighbor_relaxed_.end()) continue;
          other = &it->second;
        }
        const double w = rotation_weight(f.information);
        accum += w * (*other) * f.measurement.rotation;
        weight += w;
      }
    }
    if (weight <= 0.0) continue;
    const Mat3 updated = accum / weight;
    change_sq += (updated - relaxed_[i]).squaredNorm();
    relaxed_[i] = updated;
  }
  return std::sqrt(change_sq);
}

void RobotSolver::finish_rotation_stage() {
  for (int i = 0; i < static_cast<int>(keys_.size()); ++i) {
    if (i == anchor_index_) continue;
    estimate_[i].rotation = project_to_rotation(relaxed_[i]);
  }
  for (auto& [key, pose] : neighbor_pose_) {
    auto it = neighbor_relaxed_.find(key);
    if (it != neighbor_relaxed_.end()) {
      pose.rotation = project_to_rotation(it->second);
    }
  }
}

Mat3 RobotSolver::relaxed_rotation(const PoseKey& key) const {
  const int i = local_index(key);
  if (i < 0) {
    fail(ErrorCode::Config, "relaxed_rotation: not a local pose");
  }
  return relaxed_[i];
}

Mat3 RobotSolver::rotation_gauge(const PoseKey& anchor_key,
                                 const Mat3& target) const {
  const int i = local_index(anchor_key);
  if (i < 0) {
    fail(ErrorCode::Config, "rotation_gauge: not a local pose");
  }
  return target * relaxed_[i].inverse();
}

void RobotSolver::apply_rotation_gauge(const Mat3& g) {
  for (Mat3& r : relaxed_) r = g * r;
  for (Mat3& r : ghost_relaxed_) r = g * r;
  for (auto& [key, r] : neighbor_relaxed_) r = g * r;
}

Vec6 RobotSolver::pose_gauge(const PoseKey& anchor_key) const {
  const int i = local_index(anchor_key);
  if (i < 0) {
    fail(ErrorCode::Config, "pose_gauge: not a local pose");
  }
  Vec6 g;
  const Vec3 g_r = lin_point_[i].rotation * delta_[i].head<3>();
  g.head<3>() = g_r;
  g.tail<3>() = delta_[i].tail<3>() + skew(lin_point_[i].translation) * g_r;
  return g;
}

void RobotSolver::apply_pose_gauge(const Vec6& g) {
  const Vec3 g_r = g.head<3>();
  const Vec3 g_t = g.tail<3>();
  auto null_dir = [&](const Pose& lin) {
    Vec6 v;
    v.head<3>() = lin.rotation.transpose() * g_r;
    v.tail<3>() = g_t - skew(lin.translation) * g_r;
    return v;
  };
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    if (static_cast<int>(i) == anchor_index_) continue;
    delta_[i] -= null_dir(lin_point_[i]);
  }
  for (std::size_t g = 0; g < ghost_keys_.size(); ++g) {
    auto it = neighbor_lin_.find(ghost_keys_[g]);
    if (it != neighbor_lin_.end()) {
      ghost_delta_[g] -= null_dir(it->second);
    }
  }
  for (auto& [key, d] : neighbor_delta_) {
    auto it = neighbor_lin_.find(key);
    if (it != neighbor_lin_.end()) {
      d -= null_dir(it->second);
    }
  }
}

void RobotSolver::begin_pose_stage() {
  lin_point_ = estimate_;
  neighbor_lin_ = neighbor_pose_;
  const int n = static_cast<int>(keys_.size());
  std::vector<Mat6> h_diag(n, Mat6::Zero());
  b_.assign(n, Vec6::Zero());
  couplings_.clear();
  delta_.assign(n, Vec6::Zero());
  neighbor_delta_.clear();
  for (const Factor& f : factors_) {
    const int i = local_index(f.from);
    const int j = local_index(f.to);
    const Pose* xi = i >= 0 ? &lin_point_[i] : nullptr;
    const Pose* xj = j >= 0 ? &lin_point_[j] : nullptr;
    if (!xi) {
      auto it = neighbor_lin_.find(f.from);
      if (it == neighbor_lin_.end()) continue;
      xi = &it->second;
    }
    if (!xj) {
      auto it = neighbor_lin_.find(f.to);
      if (it == neighbor_lin_.end()) continue;
      xj = &it->second;
    }
    const FactorLin lin = linearize_factor(f, *xi, *xj);
    const Mat6 wj_from = f.information * lin.j_from;
    const Mat6 wj_to = f.information * lin.j_to;
    if (i >= 0) {
      h_diag[i] += lin.j_from.transpose() * wj_from;
      b_[i] += lin.j_from.transpose() * f.information * lin.residual;
    }
    if (j >= 0) {
      h_diag[j] += lin.j_to.transpose() * wj_to;
      b_[j] += lin.j_to.transpose() * f.information * lin.residual;
    }
    const Mat6 h_cross = lin.j_from.transpose() * wj_to;
    if (i >= 0) {
      Coupling c;
      c.pose = i;
      c.other_local = j;
      c.other_key = f.to;
      c.h = h_cross;
      couplings_.push_back(c);
    }
    if (j >= 0) {
      Coupling c;
      c.pose = j;
      c.other_local = i;
      c.other_key = f.from;
      c.h = h_cross.transpose();
      couplings_.push_back(c);
    }
  }
  h_diag_inv_.assign(n, Mat6::Zero());
  for (int i = 0; i < n; ++i) {
    if (i == anchor_index_) continue;
    // A tiny prior keeps isolated or gauge-deficient blocks invertible.
    h_diag[i] += Mat6::Identity() * 1e-12;
    h_diag_inv_[i] = h_diag[i].ldlt().solve(Mat6::Identity());
  }
  // Direct solver over the local block (own poses plus ghost copies of the
  // remote separators) for the round-based exchange.
  const int n_own = n - (anchor_index_ >= 0 ? 1 : 0);
  const int n_ghost = static_cast<int>(ghost_keys_.size());
  const int n_var = n_own + n_ghost;
  pose_solver_.reset();
  ghost_delta_.assign(ghost_keys_.size(), Vec6::Zero());
  if (n_var == 0) return;
  auto slot_of = [&](const PoseKey& key) {
    const int i = local_index(key);
    if (i >= 0) {
      return i == anchor_index_ ? -1 : free_count(i);
    }
    const int g = ghost_slot(key);
    return g < 0 ? -1 : n_own + g;
  };
  std::vector<Eigen::Triplet<double>> trips;
  pose_b_const_ = Eigen::VectorXd::Zero(6 * n_var);
  auto add6 = [&](int a, int b, const Mat6& m) {
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) {
        if (m(r, c) != 0.0) {
          trips.emplace_back(6 * a + r, 6 * b + c, m(r, c));
        }
      }
    }
  };
  for (const Factor& f : factors_) {
    const int li = local_index(f.from);
    const int lj = local_index(f.to);
    const Pose* xi = li >= 0 ? &lin_point_[li] : nullptr;
    const Pose* xj = lj >= 0 ? &lin_point_[lj] : nullptr;
    if (!xi) {
      auto it = neighbor_lin_.find(f.from);
      if (it == neighbor_lin_.end()) continue;
      xi = &it->second;
    }
    if (!xj) {
      auto it = neighbor_lin_.find(f.to);
      if (it == neighbor_lin_.end()) continue;
      xj = &it->second;
    }
    const FactorLin lin = linearize_factor(f, *xi, *xj);
    const int si = slot_of(f.from);
    const int sj = slot_of(f.to);
    if (si >= 0) {
      add6(si, si, lin.j_from.transpose() * f.information * lin.j_from);
      pose_b_const_.segment<6>(6 * si) +=
          lin.j_from.transpose() * f.information * lin.residual;
    }
    if (sj >= 0) {
      add6(sj, sj, lin.j_to.transpose() * f.information * lin.j_to);
      pose_b_const_.segment<6>(6 * sj) +=
          lin.j_to.transpose() * f.information * lin.residual;
    }
    if (si >= 0 && sj >= 0) {
      const Mat6 cross = lin.j_from.transpose() * f.information * lin.j_to;
      add6(si, sj, cross);
      add6(sj, si, cross.transpose());
    }
  }
  Mat6 prior = Mat6::Identity() * ghost_weight_;
  for (int g = 0; g < n_ghost; ++g) {
    add6(n_own + g, n_own + g, prior);
  }
  Eigen::SparseMatrix<double> h(6 * n_var, 6 * n_var);
  h.setFromTriplets(trips.begin(), trips.end());
  pose_solver_ = std::make_unique<SparseSolver>();
  pose_solver_->compute(h);
  if (pose_solver_->info() != Eigen::Success) {
    fail(ErrorCode::SingularProjection, "pose stage: singular local system");
  }
}

double RobotSolver::pose_round() {
  if (anchor_index_ < 0 && neighbor_pose_.empty()) {
    fail(ErrorCode::NoAnchor, "pose_round: isolated block without anchor");
  }
  if (!pose_solver_) return 0.0;
  const int n = static_cast<int>(keys_.size());
  const int n_own = n - (anchor_index_ >= 0 ? 1 : 0);
  const int n_ghost = static_cast<int>(ghost_keys_.size());
  Eigen::VectorXd rhs = -pose_b_const_;
  // Ghost priors centered on the latest received corrections.
  for (int g = 0; g < n_ghost; ++g) {
    auto it = neighbor_delta_.find(ghost_keys_[g]);
    if (it != neighbor_delta_.end()) {
      rhs.segment<6>(6 * (n_own + g)) += ghost_weight_ * it->second;
    }
  }
  const Eigen::VectorXd sol = pose_solver_->solve(rhs);
  double change_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i == anchor_index_) continue;
    const Vec6 updated = sol.segment<6>(6 * free_count(i));
    change_sq += (updated - delta_[i]).squaredNorm();
    delta_[i] = updated;
  }
  for (int g = 0; g < n_ghost; ++g) {
    ghost_delta_[g] = sol.segment<6>(6 * (n_own + g));
  }
  return std::sqrt(change_sq);
}

double RobotSolver::pose_sweep() {
  if (anchor_index_ < 0 && neighbor_pose_.empty()) {
    fail(ErrorCode::NoAnchor, "pose_sweep: isolated block without anchor");
  }
  const int n = static_cast<int>(keys_.size());
  std::vector<Vec6> rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = -b_[i];
  // Gather off-diagonal contributions at current correction values, then
  // update in ascending frame order.
  std::vector<std::vector<const Coupling*>> by_pose(n);
  for (const Coupling& c : couplings_) {
    by_pose[c.pose].push_back(&c);
  }
  double change_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i == anchor_index_) continue;
    Vec6 acc = -b_[i];
    for (const Coupling* c : by_pose[i]) {
      const Vec6* other;
      if (c->other_local >= 0) {
        other = &delta_[c->other_local];
      } else {
        auto it = neighbor_delta_.find(c->other_key);
        if (it == neighbor_delta_.end()) continue;
        other = &it->second;
      }
      acc -= c->h * (*other);
    }
    const Vec6 updated = h_diag_inv_[i] * acc;
    change_sq += (updated - delta_[i]).squaredNorm();
    delta_[i] = updated;
  }
  return std::sqrt(change_sq);
}

void RobotSolver::finish_pose_stage() {
  for (int i = 0; i < static_cast<int>(keys_.size()); ++i) {
    if (i == anchor_index_) continue;
    estimate_[i] = retract(lin_point_[i], delta_[i]);
  }
  for (auto& [key, pose] : neighbor_pose_) {
    auto it = neighbor_delta_.find(key);
    if (it != neighbor_delta_.end()) {
      pose = retract(neighbor_lin_.at(key), it->second);
    }
  }
}

Vec6 RobotSolver::correction(const PoseKey& key) const {
  const int i = local_index(key);
  if (i < 0) {
    fail(ErrorCode::Config, "correction: not a local pose");
  }
  return delta_[i];
}

std::map<PoseKey, Pose> RobotSolver::estimates() const {
  std::map<PoseKey, Pose> out;
  for (int i = 0; i < static_cast<int>(keys_.size()); ++i) {
    out[keys_[i]] = estimate_[i];
  }
  return out;
}

PoseGraph merge_robot_graphs(const std::vector<RobotGraph>& robots) {
  PoseGraph merged;
  std::set<std::tuple<std::int64_t, std::int64_t, int>> seen;
  // Owner values first; placeholder copies of remote endpoints must not win.
  for (const RobotGraph& r : robots) {
    for (const auto& [key, pose] : r.graph.nodes) {
      if (key.robot_id == r.robot_id) merged.nodes[key] = pose;
    }
  }
  for (const RobotGraph& r : robots) {
    for (const auto& [key, pose] : r.graph.nodes) {
      merged.nodes.emplace(key, pose);
    }
    for (const Factor& f : r.graph.factors) {
      const auto id = std::make_tuple(pack_key(f.from), pack_key(f.to),
                                      static_cast<int>(f.kind));
      if (seen.insert(id).second) {
        merged.factors.push_back(f);
      }
    }
  }
  return merged;
}

std::map<int, OdometryChain> odometry_chains(
    const std::vector<RobotGraph>& robots) {
  std::map<int, OdometryChain> chains;
  for (const RobotGraph& r : robots) {
    std::vector<Factor> odom;
    for (const Factor& f : r.graph.factors) {
      if (f.kind == FactorKind::Odometry && f.from.robot_id == r.robot_id) {
        odom.push_back(f);
      }
    }
    chains.emplace(r.robot_id, OdometryChain(odom));
  }
  return chains;
}

double pose_graph_cost(const PoseGraph& graph,
                       const std::map<PoseKey, Pose>& estimates) {
  double cost = 0.0;
  for (const Factor& f : graph.factors) {
    const auto it_from = estimates.find(f.from);
    const auto it_to = estimates.find(f.to);
    if (it_from == estimates.end() || it_to == estimates.end()) continue;
    const Pose rel = compose(inverse(it_from->second), it_to->second);
    Vec6 r;
    r.head<3>() =
        log_so3(f.measurement.rotation.transpose() * rel.rotation);
    r.tail<3>() = rel.translation - f.measurement.translation;
    cost += 0.5 * r.dot(f.information * r);
  }
  return cost;
}

namespace {

PoseKey find_anchor(const PoseGraph& graph) {
  if (graph.nodes.empty()) {
    fail(ErrorCode::Config, "empty pose graph");
  }
  return graph.nodes.begin()->first;  // map order: lowest robot, lowest frame
}

std::map<PoseKey, int> index_nodes(const PoseGraph& graph) {
  std::map<PoseKey, int> idx;
  int n = 0;
  for (const auto& [key, pose] : graph.nodes) {
    idx[key] = n++;
  }
  return idx;
}

}  // namespace

std::map<PoseKey, Pose> centralized_pgo_oracle(const PoseGraph& merged,
                                               const OracleConfig& cfg) {
  const PoseKey anchor = find_anchor(merged);
  const std::map<PoseKey, int> idx = index_nodes(merged);
  const int n = static_cast<int>(idx.size());
  std::map<PoseKey, Pose> est;
  for (const auto& [key, pose] : merged.nodes) est[key] = pose;
  if (merged.factors.empty()) return est;

  using Trip = Eigen::Triplet<double>;
  const int anchor_id = idx.at(anchor);
  auto var = [&](int node) { return node < anchor_id ? node : node - 1; };
  const int n_free = n - 1;
  if (n_free == 0) return est;

  // Stage 1: chordal relaxation. Rotation rows decouple, one SPD system
  // with three right-hand sides.
  {
    std::vector<Trip> trips;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(3 * n_free, 3);
    auto add_block = [&](int a, int b, const Mat3& m) {
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          if (m(r, c) != 0.0) {
            trips.emplace_back(3 * a + r, 3 * b + c, m(r, c));
          }
        }
      }
    };
    const Mat3 anchor_rot = merged.nodes.at(anchor).rotation;
    for (const Factor& f : merged.factors) {
      const double w = rotation_weight(f.information);
      const int i = idx.at(f.from);
      const int j = idx.at(f.to);
      const Mat3& rm = f.measurement.rotation;
      // residual per row r: x_j - Rm^T x_i, with x the stacked rotation rows.
      const bool i_free = i != anchor_id;
      const bool j_free = j != anchor_id;
      if (i_free) add_block(var(i), var(i), w * Mat3::Identity());
      if (j_free) add_block(var(j), var(j), w * Mat3::Identity());
      if (i_free && j_free) {
        add_block(var(i), var(j), -w * rm);
        add_block(var(j), var(i), -w * rm.transpose());
      } else if (!i_free && j_free) {
        // x_j = Rm^T x_a rows fixed: b_j += w Rm^T x_a
        for (int r = 0; r < 3; ++r) {
          const Vec3 xa = anchor_rot.row(r).transpose();
          rhs.block<3, 1>(3 * var(j), r) += w * rm.transpose() * xa;
        }
      } else if (i_free && !j_free) {
        for (int r = 0; r < 3; ++r) {
          const Vec3 xa = anchor_rot.row(r).transpose();
          rhs.block<3, 1>(3 * var(i), r) += w * rm * xa;
        }
      }
    }
    Eigen::SparseMatrix<double> h(3 * n_free, 3 * n_free);
    h.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver(h);
    if (solver.info() != Eigen::Success) {
      fail(ErrorCode::SingularProjection,
           "centralized_pgo_oracle: singular chordal system");
    }
    const Eigen::MatrixXd sol = solver.solve(rhs);
    for (const auto& [key, node_id] : idx) {
      if (node_id == anchor_id) continue;
      Mat3 relaxed;
      for (int r = 0; r < 3; ++r) {
        relaxed.row(r) = sol.block<3, 1>(3 * var(node_id), r).transpose();
      }
      est[key].rotation = project_to_rotation(relaxed);
    }
  }

  // Stage 2: Gauss-Newton on the full poses, one step by default.
  const int max_iters = cfg.full_gauss_newton ? cfg.max_iterations : 1;
  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<Trip> trips;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(6 * n_free);
    auto add6 = [&](int a, int b, const Mat6& m) {
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) {
          if (m(r, c) != 0.0) {
            trips.emplace_back(6 * a + r, 6 * b + c, m(r, c));
          }
        }
      }
    };
    for (const Factor& f : merged.factors) {
      const int i = idx.at(f.from);
      const int j = idx.at(f.to);
      const FactorLin lin =
          linearize_factor(f, est.at(f.from), est.at(f.to));
      const bool i_free = i != anchor_id;
      const bool j_free = j != anchor_id;
      if (i_free) {
        add6(var(i), var(i), lin.j_from.transpose() * f.information * lin.j_from);
        rhs.segment<6>(6 * var(i)) -=
            lin.j_from.transpose() * f.information * lin.residual;
      }
      if (j_free) {
        add6(var(j), var(j), lin.j_to.transpose() * f.information * lin.j_to);
        rhs.segment<6>(6 * var(j)) -=
            lin.j_to.transpose() * f.information * lin.residual;
      }
      if (i_free && j_free) {
        const Mat6 cross = lin.j_from.transpose() * f.information * lin.j_to;
        add6(var(i), var(j), cross);
        add6(var(j), var(i), cross.transpose());
      }
    }
    Eigen::SparseMatrix<double> h(6 * n_free, 6 * n_free);
    h.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver(h);
    if (solver.info() != Eigen::Success) {
      fail(ErrorCode::SingularProjection,
           "centralized_pgo_oracle: singular normal equations");
    }
    const Eigen::VectorXd delta = solver.solve(rhs);
    for (const auto& [key, node_id] : idx) {
      if (node_id == anchor_id) continue;
      est[key] = retract(est[key], delta.segment<6>(6 * var(node_id)));
    }
    if (delta.norm() < cfg.tol) break;
  }
  return est;
}

namespace {

struct StageExchange {
  // last iteration received from each neighbor robot, for barrier checks
  std::map<int, std::map<int, int>> last_seen;  // robot -> neighbor -> iter
};

}  // namespace

PgoResult run_distributed_pgo(const std::vector<RobotGraph>& robots,
                              const DgsConfig& cfg, Network& net) {
  cfg.validate();
  PgoResult result;
  for (const RobotGraph& r : robots) {
    for (const auto& [key, pose] : r.graph.nodes) {
      if (key.robot_id == r.robot_id) result.estimates[key] = pose;
    }
  }
  if (robots.empty()) return result;

  const PoseGraph merged = merge_robot_graphs(robots);
  std::vector<Factor> all_inter;
  for (const Factor& f : merged.factors) {
    if (f.kind == FactorKind::InterLoop) all_inter.push_back(f);
  }
  const std::map<int, OdometryChain> chains = odometry_chains(robots);

  // Fast path: a robot with no loop factor of any kind keeps its odometry
  // chain bit for bit.
  auto has_loops = [&](const RobotGraph& r) {
    for (const Factor& f : r.graph.factors) {
      if (f.kind != FactorKind::Odometry) return true;
    }
    return false;
  };

  // Components over the inter-factor graph; each optimizes independently.
  std::set<int> done;
  int consecutive_aborts = 0;
  for (const RobotGraph& seed : robots) {
    if (done.count(seed.robot_id)) continue;
    const std::vector<int> order =
        compute_optimization_order(all_inter, seed.robot_id);
    for (int r : order) done.insert(r);
    std::vector<const RobotGraph*> members;
    for (int id : order) {
      for (const RobotGraph& r : robots) {
        if (r.robot_id == id) members.push_back(&r);
      }
    }
    if (members.size() == 1 && !has_loops(*members.front())) {
      continue;  // odometry only, nothing to optimize
    }

    // Current estimates persist across rounds.
    std::map<PoseKey, Pose> current;
    for (const RobotGraph* m : members) {
      for (const auto& [key, pose] : m->graph.nodes) {
        if (key.robot_id == m->robot_id) current[key] = pose;
      }
    }
    const int anchor_robot = order.front();

    double previous_cost = -1.0;
    for (int round = 1; round <= cfg.max_outer_iterations; ++round) {
      // Per-round outlier rejection over each robot's inter factors.
      std::map<int, std::vector<Factor>> accepted_by_robot;
      std::vector<Factor> accepted_union;
      if (cfg.enable_pcm && !all_inter.empty()) {
        std::vector<Factor> component_inter;
        for (const Factor& f : all_inter) {
          if (std::find(order.begin(), order.end(), f.from.robot_id) !=
              order.end()) {
            component_inter.push_back(f);
          }
        }
        const PcmResult pcm =
            filter_inter_loops(component_inter, chains, cfg.pcm);
        result.pcm_exact = result.pcm_exact && pcm.exact;
        accepted_union = pcm.accepted;
      } else {
        for (const Factor& f : all_inter) accepted_union.push_back(f);
      }
      for (const Factor& f : accepted_union) {
        accepted_by_robot[f.from.robot_id].push_back(f);
        accepted_by_robot[f.to.robot_id].push_back(f);
      }

      // The accepted set may split the component; each sub-component gets
      // its own gauge anchor (lowest robot id). Multi-robot sub-components
      // solve gauge-free and re-gauge on the anchor after each stage, which
      // kills the slow global mode of anchored block iterations.
      std::map<int, int> anchor_of;
      std::map<int, bool> multi;
      for (int r : order) {
        const auto sub = compute_optimization_order(accepted_union, r);
        anchor_of[r] = sub.front();
        multi[r] = sub.size() > 1;
      }

      // Build solvers over odometry + intra factors + accepted inter.
      std::map<int, RobotSolver> solvers;
      for (const RobotGraph* m : members) {
        PoseGraph local;
        for (const auto& [key, pose] : m->graph.nodes) {
          if (key.robot_id == m->robot_id) local.nodes[key] = pose;
        }
        for (const Factor& f : m->graph.factors) {
          if (f.kind != FactorKind::InterLoop) local.factors.push_back(f);
        }
        for (const Factor& f : accepted_by_robot[m->robot_id]) {
          local.factors.push_back(f);
        }
        solvers.emplace(m->robot_id,
                        RobotSolver(m->robot_id, local, current,
                                    multi[m->robot_id]
                                        ? RobotSolver::Gauge::Free
                                        : RobotSolver::Gauge::Hard,
                                    cfg.ghost_prior_weight));
      }
      // Gauge targets: each sub-anchor's first pose stays put.
      std::map<int, Pose> gauge_target;  // sub-anchor robot -> pose
      for (int r : order) {
        if (anchor_of[r] == r && multi[r]) {
          gauge_target[r] = current.at(solvers.at(r).first_key());
        }
      }

      // Handshake: start flags carry separator initialization.
      bool abort_round = false;
      for (int r : order) {
        RobotSolver& s = solvers.at(r);
        for (int peer : s.neighbor_robots()) {
          StartFlagBody body;
          body.round = static_cast<std::uint32_t>(round);
          for (const PoseKey& key : s.separators_for(peer)) {
            auto it = current.find(key);
            if (it != current.end()) {
              body.separators.push_back(PoseEntry{key, it->second});
            }
          }
          net.send(make_message(r, peer, net.now(), body));
        }
      }
      for (int t = 0; t < cfg.barrier_timeout_sweeps && !net.idle(); ++t) {
        net.step(0.01);
      }
      std::map<int, std::set<int>> flags_seen;
      for (int r : order) {
        for (const SwarmMessage& msg : net.poll(r)) {
          if (msg.kind != MessageKind::StartFlag) continue;
          const auto body = std::get<StartFlagBody>(
              decode_message(MessageKind::StartFlag, msg.payload));
          flags_seen[r].insert(msg.src);
          for (const PoseEntry& e : body.separators) {
            solvers.at(r).set_neighbor_pose(e.key, e.pose);
          }
        }
      }
      for (int r : order) {
        const auto neighbors = solvers.at(r).neighbor_robots();
        if (flags_seen[r].size() != neighbors.size()) {
          abort_round = true;
        }
      }
      if (abort_round) {
        for (int r : order) {
          for (int peer : solvers.at(r).neighbor_robots()) {
            AbortBody body;
            body.round = static_cast<std::uint32_t>(round);
            body.reason = 1;  // missing start flag
            net.send(make_message(r, peer, net.now(), body));
          }
        }
        result.log.push_back(
            PgoRoundLog{round, "aborted", 0, 0.0,
                        pose_graph_cost(merged, current)});
        if (++consecutive_aborts >= cfg.max_consecutive_aborts) {
          result.aborted = true;
          break;
        }
        continue;
      }
      consecutive_aborts = 0;

      // Rotation stage. Messages are flushed after every robot's turn so the
      // next robot in the order reads fresh separator values: sequential
      // exact block minimization, monotone in the chordal objective.
      auto flush = [&net]() {
        for (int guard = 0; !net.idle() && guard < 10000; ++guard) {
          net.step(0.01);
        }
      };
      for (int r : order) solvers.at(r).begin_rotation_stage();
      double stage_change = 0.0;
      int sweeps = 0;
      std::vector<double> recent;
      for (int sweep = 1; sweep <= cfg.max_inner_sweeps; ++sweep) {
        stage_change = 0.0;
        for (int r : order) {
          RobotSolver& s = solvers.at(r);
          for (const SwarmMessage& msg : net.poll(r)) {
            if (msg.kind != MessageKind::RotationEstimate) continue;
            const auto body = std::get<RotationEstimateBody>(
                decode_message(MessageKind::RotationEstimate, msg.payload));
            for (const RotationEntry& e : body.entries) {
              s.set_neighbor_rotation(e.key, e.rotation);
            }
          }
          stage_change = std::max(stage_change, s.rotation_round());
          for (int peer : s.neighbor_robots()) {
            RotationEstimateBody body;
            body.iteration = static_cast<std::uint32_t>(sweep);
            for (const PoseKey& key : s.separators_for(peer)) {
              body.entries.push_back(
                  RotationEntry{key, s.relaxed_rotation(key)});
            }
            net.send(make_message(r, peer, net.now(), body));
          }
          flush();
        }
        sweeps = sweep;
        if (std::getenv("DCL_DGS_TRACE") && sweep % 100 == 0) {
          std::fprintf(stderr, "rot sweep %d change %.6g\n", sweep,
                       stage_change);
        }
        if (stage_change < cfg.rotation_tol) break;
        // Quantized exchanges can floor the change norm; stop on stall.
        recent.push_back(stage_change);
        if (recent.size() > 50) {
          recent.erase(recent.begin());
          if (recent.front() <= recent.back() * 1.001) break;
        }
      }
      result.log.push_back(PgoRoundLog{round, "rotation", sweeps,
                                       stage_change,
                                       pose_graph_cost(merged, current)});
      for (int r : order) {
        RobotSolver& s = solvers.at(r);
        for (const SwarmMessage& msg : net.poll(r)) {
          if (msg.kind != MessageKind::RotationEstimate) continue;
          const auto body = std::get<RotationEstimateBody>(
              decode_message(MessageKind::RotationEstimate, msg.payload));
          for (const RotationEntry& e : body.entries) {
            s.set_neighbor_rotation(e.key, e.rotation);
          }
        }
      }
      // Exact re-gauging: the sub-anchor broadcasts one transform that puts
      // its first relaxed rotation back on target; every member applies it
      // to its own block and its neighbor cache.
      std::map<int, Mat3> gauge_rot;
      for (const auto& [r, target] : gauge_target) {
        gauge_rot[r] = solvers.at(r).rotation_gauge(solvers.at(r).first_key(),
                                                    target.rotation);
      }
      for (int r : order) {
        if (multi[r]) {
          solvers.at(r).apply_rotation_gauge(gauge_rot.at(anchor_of[r]));
        }
      }
      for (int r : order) {
        solvers.at(r).finish_rotation_stage();
      }

      // Pose stage, one linearization per round.
      for (int r : order) solvers.at(r).begin_pose_stage();
      recent.clear();
      std::vector<double> growth_window;
      for (int sweep = 1; sweep <= cfg.max_inner_sweeps; ++sweep) {
        stage_change = 0.0;
        for (int r : order) {
          RobotSolver& s = solvers.at(r);
          for (const SwarmMessage& msg : net.poll(r)) {
            if (msg.kind != MessageKind::PoseEstimate) continue;
            const auto body = std::get<PoseEstimateBody>(
                decode_message(MessageKind::PoseEstimate, msg.payload));
            for (const CorrectionEntry& e : body.entries) {
              s.set_neighbor_correction(e.key, e.correction);
            }
          }
          stage_change = std::max(stage_change, s.pose_round());
          for (int peer : s.neighbor_robots()) {
            PoseEstimateBody body;
            body.iteration = static_cast<std::uint32_t>(sweep);
            for (const PoseKey& key : s.separators_for(peer)) {
              body.entries.push_back(CorrectionEntry{key, s.correction(key)});
            }
            net.send(make_message(r, peer, net.now(), body));
          }
          flush();
        }
        sweeps = sweep;
        growth_window.push_back(stage_change);
        if (static_cast<int>(growth_window.size()) > cfg.divergence_window) {
          growth_window.erase(growth_window.begin());
          if (growth_window.back() >
              cfg.divergence_growth * growth_window.front()) {
            fail(ErrorCode::Diverged,
                 "pose stage corrections growing unbounded");
          }
        }
        if (stage_change < cfg.pose_tol) break;
        recent.push_back(stage_change);
        if (recent.size() > 50) {
          recent.erase(recent.begin());
          if (recent.front() <= recent.back() * 1.001) break;
        }
      }
      // Re-gauge the corrections so the sub-anchor's first pose stays put.
      std::map<int, Vec6> gauge_pose;
      for (const auto& [r, target] : gauge_target) {
        gauge_pose[r] = solvers.at(r).pose_gauge(solvers.at(r).first_key());
      }
      for (int r : order) {
        if (multi[r]) {
          solvers.at(r).apply_pose_gauge(gauge_pose.at(anchor_of[r]));
        }
      }
      for (int r : order) solvers.at(r).finish_pose_stage();

      // Collect, log, and decide outer convergence on the retraction size.
      double retraction = 0.0;
      std::map<PoseKey, Pose> updated = current;
      for (int r : order) {
        for (const auto& [key, pose] : solvers.at(r).estimates()) {
          retraction += log_map(compose(inverse(current.at(key)), pose))
                            .squaredNorm();
          updated[key] = pose;
        }
      }
      retraction = std::sqrt(retraction);
      const double cost_after = pose_graph_cost(merged, updated);
      result.log.push_back(
          PgoRoundLog{round, "pose", sweeps, retraction, cost_after});
      const double cost_before = pose_graph_cost(merged, current);
      result.rounds = round;
      result.accepted_inter = accepted_union;
      if (cost_after > cost_before) {
        // Reject a round that would raise the objective; keep the previous
        // estimates and stop.
        result.converged = true;
        break;
      }
      current = updated;
      if (retraction < cfg.pose_tol * 10.0 ||
          (previous_cost >= 0.0 &&
           std::abs(previous_cost - cost_after) <
               1e-9 * std::max(1.0, previous_cost))) {
        result.converged = true;
        break;
      }
      previous_cost = cost_after;
    }
    for (const auto& [key, pose] : current) {
      result.estimates[key] = pose;
    }
  }
  return result;
}

}  // namespace dcl
