#include "dcl/loop_closure.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "dcl/rng.hpp"

namespace dcl {

bool is_keyframe(const Pose& prev, const Pose& cur, const KeyframeGate& gate) {
  const Pose rel = compose(inverse(prev), cur);
  if (rel.translation.norm() >= gate.d_min) return true;
  return rotation_distance(Mat3::Identity(), rel.rotation) >= gate.theta_min;
}

std::vector<int> rowkey_knn(const std::vector<std::vector<double>>& db,
                            const std::vector<double>& query, int k) {
  if (db.empty()) return {};
  KdTree tree(query.size(), db);
  std::vector<int> out;
  for (const KnnHit& hit : tree.knn(query, k)) {
    out.push_back(hit.index);
  }
  return out;
}

void DescriptorDb::insert_own(const PoseKey& key,
                              const IrisDescriptor& descriptor) {
  Entry e;
  e.key = key;
  e.row_key = descriptor.row_key;
  e.descriptor = descriptor;
  e.own = true;
  entries_.push_back(std::move(e));
}

void DescriptorDb::insert_remote(const PoseKey& key,
                                 std::vector<double> row_key) {
  Entry e;
  e.key = key;
  e.row_key = std::move(row_key);
  e.own = false;
  entries_.push_back(std::move(e));
}

const IrisDescriptor* DescriptorDb::own_descriptor(const PoseKey& key) const {
  for (const Entry& e : entries_) {
    if (e.own && e.key == key) return &e.descriptor;
  }
  return nullptr;
}

void DescriptorDb::maybe_rebuild() const {
  // The tree is rebuilt in chunks; the un-indexed suffix is scanned linearly
  // so results stay exact.
  if (entries_.size() - indexed_ >= 64 || (indexed_ == 0 && !entries_.empty())) {
    std::vector<std::vector<double>> pts;
    pts.reserve(entries_.size());
    for (const Entry& e : entries_) pts.push_back(e.row_key);
    const std::size_t dim = pts.front().size();
    tree_ = KdTree(dim, std::move(pts));
    indexed_ = entries_.size();
  }
}

std::optional<LoopCandidate> DescriptorDb::find_candidate(
    const PoseKey& query_key, const IrisDescriptor& query,
    const SearchConfig& cfg, bool intra,
    std::vector<LoopCandidate>* evaluated) const {
  if (entries_.empty()) return std::nullopt;
  maybe_rebuild();
  std::vector<KnnHit> hits;
  if (indexed_ > 0) {
    hits = tree_.knn(query.row_key, cfg.k);
  }
  for (std::size_t i = indexed_; i < entries_.size(); ++i) {
    double sq = 0.0;
    for (std::size_t d = 0; d < query.row_key.size(); ++d) {
      const double diff = query.row_key[d] - entries_[i].row_key[d];
      sq += diff * diff;
    }
    hits.push_back(KnnHit{static_cast<int>(i), sq});
  }
  std::sort(hits.begin(), hits.end(), [](const KnnHit& a, const KnnHit& b) {
    return a.sq_dist < b.sq_dist ||
           (a.sq_dist == b.sq_dist && a.index < b.index);
  });
  if (static_cast<int>(hits.size()) > cfg.k) hits.resize(cfg.k);

  std::optional<LoopCandidate> best;
  for (const KnnHit& hit : hits) {
    const Entry& e = entries_[hit.index];
    if (!e.own) continue;  // only own keyframes can be verified
    if (intra) {
      if (e.key.robot_id == query_key.robot_id &&
          e.key.frame_index > query_key.frame_index - cfg.exclusion) {
        continue;
      }
    } else if (e.key.robot_id == query_key.robot_id) {
      continue;
    }
    const IrisDistance d = iris_distance(query, e.descriptor);
    LoopCandidate cand{query_key, e.key, d.distance, d.shift};
    if (evaluated) evaluated->push_back(cand);
    if (d.distance < cfg.eta &&
        (!best || d.distance < best->distance)) {
      best = cand;
    }
  }
  return best;
}

namespace {

struct Correspondence {
  int src = 0;
  int tgt = 0;
  double sq_dist = 0.0;
};

KdTree build_tree(const PointCloud& cloud) {
  std::vector<double> flat;
  flat.reserve(cloud.size() * 3);
  for (const Vec3& p : cloud.points) {
    flat.push_back(p.x());
    flat.push_back(p.y());
    flat.push_back(p.z());
  }
  return KdTree(3, std::move(flat));
}

std::vector<int> subsample_indices(std::size_t n, int cap) {
  std::vector<int> idx;
  if (cap <= 0 || static_cast<int>(n) <= cap) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  } else {
    const double stride = static_cast<double>(n) / cap;
    idx.reserve(cap);
    for (int i = 0; i < cap; ++i) {
      idx.push_back(static_cast<int>(i * stride));
    }
  }
  return idx;
}

/// Closed-form rigid fit (Umeyama without scale) mapping src[i] onto tgt[i].
Pose rigid_fit(const std::vector<Vec3>& src, const std::vector<Vec3>& tgt) {
  Vec3 mu_s = Vec3::Zero(), mu_t = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_t += tgt[i];
  }
  mu_s /= static_cast<double>(src.size());
  mu_t /= static_cast<double>(src.size());
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cov += (tgt[i] - mu_t) * (src[i] - mu_s).transpose();
  }
  Pose out;
  out.rotation = kabsch_rotation(cov);
  out.translation = mu_t - out.rotation * mu_s;
  return out;
}

bool collinear(const PointCloud& cloud) {
  if (cloud.size() < 3) return true;
  Vec3 mu = Vec3::Zero();
  for (const Vec3& p : cloud.points) mu += p;
  mu /= static_cast<double>(cloud.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : cloud.points) {
    cov += (p - mu) * (p - mu).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  // Rank >= 2 needed for a well-posed rigid fit.
  return eig.eigenvalues()(1) < 1e-12 * std::max(1.0, eig.eigenvalues()(2));
}

}  // namespace

IcpResult icp_align(const PointCloud& source, const PointCloud& target,
                    const Pose& init, const IcpConfig& cfg,
                    const KdTree* target_tree) {
  if (collinear(source) || collinear(target)) {
    fail(ErrorCode::DegenerateGeometry,
         "icp_align: need >= 3 non-collinear points");
  }
  KdTree local_tree;
  if (!target_tree) {
    local_tree = build_tree(target);
    target_tree = &local_tree;
  }
  const double max_sq = cfg.corr_dist * cfg.corr_dist;
  const std::vector<int> sample =
      subsample_indices(source.size(), cfg.max_source_points);
  IcpResult res;
  res.transform = init;
  std::vector<Vec3> src_pts, tgt_pts;
  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    src_pts.clear();
    tgt_pts.clear();
    double sq_sum = 0.0;
    for (int si : sample) {
      const Vec3& p = source.points[si];
      const Vec3 q = res.transform.apply(p);
      const double query[3] = {q.x(), q.y(), q.z()};
      const KnnHit hit = target_tree->nearest_within(query, max_sq);
      if (hit.index < 0) continue;
      src_pts.push_back(p);
      tgt_pts.push_back(target.points[hit.index]);
      sq_sum += hit.sq_dist;
    }
    if (src_pts.size() < 3) {
      fail(ErrorCode::NoOverlap, "icp_align: no correspondences in range");
    }
    res.objective_log.push_back(sq_sum / static_cast<double>(src_pts.size()));
    const Pose updated = rigid_fit(src_pts, tgt_pts);
    const Vec6 delta = log_map(compose(inverse(res.transform), updated));
    res.transform = updated;
    res.iterations = iter + 1;
    if (delta.norm() < cfg.tol) break;
  }
  // Final fitness over the last correspondence set.
  double residual = 0.0;
  for (std::size_t i = 0; i < src_pts.size(); ++i) {
    residual += (res.transform.apply(src_pts[i]) - tgt_pts[i]).norm();
  }
  res.fitness = residual / static_cast<double>(src_pts.size());
  return res;
}

RansacResult ransac_verify(const PointCloud& source, const PointCloud& target,
                           const Pose& init, const RansacConfig& cfg,
                           const KdTree* target_tree) {
  RansacResult res;
  res.best_model = init;
  if (source.empty() || target.empty()) return res;
  KdTree local_tree;
  if (!target_tree) {
    local_tree = build_tree(target);
    target_tree = &local_tree;
  }
  std::vector<Correspondence> pairs;
  const double max_sq = cfg.pair_dist * cfg.pair_dist;
  const std::vector<int> sample = subsample_indices(source.size(), 1500);
  for (int i : sample) {
    const Vec3 q = init.apply(source.points[i]);
    const double query[3] = {q.x(), q.y(), q.z()};
    const KnnHit hit = target_tree->nearest_within(query, max_sq);
    if (hit.index >= 0) {
      pairs.push_back({i, hit.index, hit.sq_dist});
    }
  }
  if (pairs.size() < 3) {
    return res;  // fail, not an error
  }
  Rng rng(cfg.seed);
  const double inlier_sq = cfg.inlier_dist * cfg.inlier_dist;
  int best_inliers = -1;
  for (int it = 0; it < cfg.iters; ++it) {
    int ia = rng.uniform_int(0, static_cast<int>(pairs.size()) - 1);
    int ib = rng.uniform_int(0, static_cast<int>(pairs.size()) - 1);
    int ic = rng.uniform_int(0, static_cast<int>(pairs.size()) - 1);
    if (ia == ib || ib == ic || ia == ic) continue;
    const std::vector<Vec3> s{source.points[pairs[ia].src],
                              source.points[pairs[ib].src],
                              source.points[pairs[ic].src]};
    const std::vector<Vec3> t{target.points[pairs[ia].tgt],
                              target.points[pairs[ib].tgt],
                              target.points[pairs[ic].tgt]};
    Pose model;
    try {
      model = rigid_fit(s, t);
    } catch (const Error&) {
      continue;  // degenerate sample
    }
    int inliers = 0;
    for (const Correspondence& c : pairs) {
      const Vec3 diff =
          model.apply(source.points[c.src]) - target.points[c.tgt];
      if (diff.squaredNorm() <= inlier_sq) ++inliers;
    }
    if (inliers > best_inliers) {
      best_inliers = inliers;
      res.best_model = model;
    }
  }
  if (best_inliers < 0) return res;
  res.inlier_ratio =
      static_cast<double>(best_inliers) / static_cast<double>(pairs.size());
  res.pass = res.inlier_ratio >= cfg.min_inlier_ratio;
  return res;
}

std::optional<VerifiedLoop> verify_candidate(const LoopCandidate& cand,
                                             const PointCloud& match_cloud,
                                             const PointCloud& query_submap,
                                             const VerifyConfig& cfg) {
  const PointCloud submap = cfg.submap_leaf > 0
                                ? voxel_downsample(query_submap, cfg.submap_leaf)
                                : query_submap;
  // Shift k means the match image columns are the query's shifted by k, so
  // the match frame is yawed by -k * (2*pi/n_a) relative to the query frame.
  const double yaw =
      -static_cast<double>(cand.shift) * 2.0 * M_PI / cfg.n_a;
  const Pose init = make_pose_rz(yaw);
  RansacConfig rcfg = cfg.ransac;
  rcfg.seed = mix_seed(static_cast<std::uint64_t>(pack_key(cand.query)),
                       static_cast<std::uint64_t>(pack_key(cand.match)));
  const KdTree tree = build_tree(submap);
  const RansacResult gate =
      ransac_verify(match_cloud, submap, init, rcfg, &tree);
  if (!gate.pass) return std::nullopt;
  try {
    const IcpResult icp =
        icp_align(match_cloud, submap, gate.best_model, cfg.icp, &tree);
    if (cfg.max_fitness > 0 && icp.fitness > cfg.max_fitness) {
      return std::nullopt;  // refinement did not lock onto the structure
    }
    VerifiedLoop loop;
    loop.candidate = cand;
    loop.relative_pose = icp.transform;
    loop.inlier_ratio = gate.inlier_ratio;
    loop.fitness = icp.fitness;
    return loop;
  } catch (const Error&) {
    return std::nullopt;
  }
}

PointCloud build_submap(const std::vector<KeyframeRecord>& keyframes,
                        int center_frame, int half_width) {
  PointCloud out;
  if (keyframes.empty()) return out;
  const int n = static_cast<int>(keyframes.size());
  const int center = std::clamp(center_frame, 0, n - 1);
  const Pose center_inv = inverse(keyframes[center].odom_pose);
  const int lo = std::max(0, center - half_width);
  const int hi = std::min(n - 1, center + half_width);
  for (int i = lo; i <= hi; ++i) {
    const Pose rel = compose(center_inv, keyframes[i].odom_pose);
    for (const Vec3& p : keyframes[i].filtered_cloud.points) {
      out.points.push_back(rel.apply(p));
    }
  }
  return out;
}

}  // namespace dcl
