#include "dcl/pcm.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cstdio>
#include <fstream>

namespace dcl {

OdometryChain::OdometryChain(const std::vector<Factor>& odometry) {
  std::vector<Factor> sorted = odometry;
  std::sort(sorted.begin(), sorted.end(), [](const Factor& a, const Factor& b) {
    return a.from.frame_index < b.from.frame_index;
  });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Factor& f = sorted[i];
    if (f.kind != FactorKind::Odometry) {
      fail(ErrorCode::Config, "OdometryChain: non-odometry factor");
    }
    if (i > 0 && f.from.frame_index != sorted[i - 1].from.frame_index + 1) {
      fail(ErrorCode::Config, "OdometryChain: gap in chain");
    }
  }
  min_frame_ = sorted.empty() ? 0 : sorted.front().from.frame_index;
  prefix_pose_.push_back(Pose::identity());
  prefix_cov_.push_back(Mat6::Zero());
  for (const Factor& f : sorted) {
    prefix_pose_.push_back(compose(prefix_pose_.back(), f.measurement));
    prefix_cov_.push_back(prefix_cov_.back() +
                          f.information.ldlt().solve(Mat6::Identity()));
  }
}

Pose OdometryChain::segment(int from_frame, int to_frame) const {
  const int a = from_frame - min_frame_;
  const int b = to_frame - min_frame_;
  if (a < 0 || b < 0 || a >= static_cast<int>(prefix_pose_.size()) ||
      b >= static_cast<int>(prefix_pose_.size())) {
    fail(ErrorCode::Config, "OdometryChain: frame out of range");
  }
  return compose(inverse(prefix_pose_[a]), prefix_pose_[b]);
}

Mat6 OdometryChain::segment_covariance(int from_frame, int to_frame) const {
  const int a = from_frame - min_frame_;
  const int b = to_frame - min_frame_;
  if (a < 0 || b < 0 || a >= static_cast<int>(prefix_cov_.size()) ||
      b >= static_cast<int>(prefix_cov_.size())) {
    fail(ErrorCode::Config, "OdometryChain: frame out of range");
  }
  const int lo = std::min(a, b);
  const int hi = std::max(a, b);
  return prefix_cov_[hi] - prefix_cov_[lo];
}

namespace {

struct OrientedLoop {
  int frame_a = 0;  // frame on the lower-id robot
  int frame_b = 0;  // frame on the higher-id robot
  Pose z;           // maps points in b's keyframe frame into a's
  Mat6 cov;
};

OrientedLoop orient(const Factor& loop, int robot_a, int robot_b) {
  OrientedLoop out;
  out.cov = loop.information.ldlt().solve(Mat6::Identity());
  if (loop.from.robot_id == robot_a && loop.to.robot_id == robot_b) {
    out.frame_a = loop.from.frame_index;
    out.frame_b = loop.to.frame_index;
    out.z = loop.measurement;
  } else if (loop.from.robot_id == robot_b && loop.to.robot_id == robot_a) {
    out.frame_a = loop.to.frame_index;
    out.frame_b = loop.from.frame_index;
    out.z = inverse(loop.measurement);
  } else {
    fail(ErrorCode::MixedPair, "loop does not connect the expected robot pair");
  }
  return out;
}

std::pair<int, int> loop_pair(const Factor& loop) {
  return {std::min(loop.from.robot_id, loop.to.robot_id),
          std::max(loop.from.robot_id, loop.to.robot_id)};
}

}  // namespace

double pairwise_residual(const Factor& loop1, const Factor& loop2,
                         const OdometryChain& chain_a,
                         const OdometryChain& chain_b, bool weighted) {
  const auto pair1 = loop_pair(loop1);
  const auto pair2 = loop_pair(loop2);
  if (pair1 != pair2 || pair1.first == pair1.second) {
    fail(ErrorCode::MixedPair,
         "pairwise_residual: loops connect different robot pairs");
  }
  const OrientedLoop l1 = orient(loop1, pair1.first, pair1.second);
  const OrientedLoop l2 = orient(loop2, pair1.first, pair1.second);
  // z_a(i->j) * z1(j->m) * z_b(m->n) * z2(i->n)^-1, with l1 at (j, m) and
  // l2 at (i, n).
  const Pose za = chain_a.segment(l2.frame_a, l1.frame_a);
  const Pose zb = chain_b.segment(l1.frame_b, l2.frame_b);
  const Pose cycle = compose(compose(compose(za, l1.z), zb), inverse(l2.z));
  const Vec6 r = log_map(cycle);
  if (!weighted) {
    return r.squaredNorm();
  }
  Mat6 cov = chain_a.segment_covariance(l2.frame_a, l1.frame_a) +
             chain_b.segment_covariance(l1.frame_b, l2.frame_b) + l1.cov +
             l2.cov;
  return r.dot(cov.ldlt().solve(r));
}

ConsistencyGraph build_consistency_graph(
    const std::vector<Factor>& loops,
    const std::map<int, OdometryChain>& odometry, const PcmConfig& cfg) {
  ConsistencyGraph g;
  g.loops = loops;
  const int n = static_cast<int>(loops.size());
  g.adjacency.assign(n, std::vector<char>(n, 0));
  g.residuals.assign(n, std::vector<double>(n, 0.0));
  if (n == 0) return g;
  const auto pair = loop_pair(loops.front());
  const OdometryChain& chain_a = odometry.at(pair.first);
  const OdometryChain& chain_b = odometry.at(pair.second);
  for (int i = 0; i < n; ++i) {
    g.adjacency[i][i] = 1;
    for (int j = i + 1; j < n; ++j) {
      const double r =
          pairwise_residual(loops[i], loops[j], chain_a, chain_b, cfg.weighted);
      g.residuals[i][j] = r;
      g.residuals[j][i] = r;
      const char ok = r < cfg.epsilon ? 1 : 0;
      g.adjacency[i][j] = ok;
      g.adjacency[j][i] = ok;
    }
  }
  return g;
}

namespace {

struct CliqueSearch {
  const std::vector<std::vector<char>>& adj;
  std::vector<int> best;

  // The matrix carries a true diagonal; clique neighborhoods exclude self.
  bool neighbor(int a, int b) const { return a != b && adj[a][b]; }

  bool better(const std::vector<int>& cand) const {
    if (cand.size() != best.size()) return cand.size() > best.size();
    return std::lexicographical_compare(cand.begin(), cand.end(),
                                        best.begin(), best.end());
  }

  void expand(std::vector<int>& r, std::vector<int>& p, std::vector<int>& x) {
    if (p.empty() && x.empty()) {
      std::vector<int> cand = r;
      std::sort(cand.begin(), cand.end());
      if (better(cand)) best = cand;
      return;
    }
    if (r.size() + p.size() < best.size()) return;  // bound
    // Pivot: vertex of P union X with most neighbors in P.
    int pivot = -1, pivot_deg = -1;
    for (const auto& set : {p, x}) {
      for (int v : set) {
        int deg = 0;
        for (int u : p) {
          if (neighbor(v, u)) ++deg;
        }
        if (deg > pivot_deg) {
          pivot_deg = deg;
          pivot = v;
        }
      }
    }
    std::vector<int> candidates;
    for (int v : p) {
      if (pivot < 0 || !neighbor(pivot, v)) candidates.push_back(v);
    }
    for (int v : candidates) {
      std::vector<int> p2, x2;
      for (int u : p) {
        if (neighbor(v, u)) p2.push_back(u);
      }
      for (int u : x) {
        if (neighbor(v, u)) x2.push_back(u);
      }
      r.push_back(v);
      expand(r, p2, x2);
      r.pop_back();
      p.erase(std::find(p.begin(), p.end(), v));
      x.push_back(v);
    }
  }
};

MaxCliqueResult greedy_clique(const std::vector<std::vector<char>>& adj) {
  const int n = static_cast<int>(adj.size());
  // Degeneracy-style greedy: repeatedly take the highest-degree vertex
  // compatible with the current clique.
  std::vector<int> degree(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && adj[i][j]) ++degree[i];
    }
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return degree[a] > degree[b] || (degree[a] == degree[b] && a < b);
  });
  MaxCliqueResult res;
  res.exact = false;
  for (int v : order) {
    bool ok = true;
    for (int u : res.members) {
      if (!adj[v][u]) {
        ok = false;
        break;
      }
    }
    if (ok) res.members.push_back(v);
  }
  std::sort(res.members.begin(), res.members.end());
  return res;
}

}  // namespace

MaxCliqueResult max_clique(const std::vector<std::vector<char>>& adjacency,
                           int exact_max_nodes) {
  const int n = static_cast<int>(adjacency.size());
  if (n == 0) return {};
  if (n > exact_max_nodes) {
    return greedy_clique(adjacency);
  }
  CliqueSearch search{adjacency, {}};
  std::vector<int> r, p, x;
  for (int i = 0; i < n; ++i) p.push_back(i);
  search.expand(r, p, x);
  MaxCliqueResult res;
  res.members = search.best;
  return res;
}

PcmResult filter_inter_loops(const std::vector<Factor>& loops,
                             const std::map<int, OdometryChain>& odometry,
                             const PcmConfig& cfg) {
  PcmResult res;
  std::map<std::pair<int, int>, std::vector<Factor>> by_pair;
  for (const Factor& f : loops) {
    if (f.kind != FactorKind::InterLoop) {
      fail(ErrorCode::Config, "filter_inter_loops: non-inter factor");
    }
    by_pair[loop_pair(f)].push_back(f);
  }
  for (auto& [pair, pair_loops] : by_pair) {
    const ConsistencyGraph g =
        build_consistency_graph(pair_loops, odometry, cfg);
    const MaxCliqueResult clique =
        max_clique(g.adjacency, cfg.exact_max_nodes);
    res.exact = res.exact && clique.exact;
    std::vector<char> in_clique(pair_loops.size(), 0);
    for (int idx : clique.members) in_clique[idx] = 1;
    for (std::size_t i = 0; i < pair_loops.size(); ++i) {
      PcmLoopAudit a;
      a.loop = pair_loops[i];
      a.partners = static_cast<int>(pair_loops.size()) - 1;
      a.accepted = in_clique[i];
      double min_res = 0.0;
      int consistent = 0;
      bool first = true;
      for (std::size_t j = 0; j < pair_loops.size(); ++j) {
        if (i == j) continue;
        if (g.adjacency[i][j]) ++consistent;
        if (first || g.residuals[i][j] < min_res) {
          min_res = g.residuals[i][j];
          first = false;
        }
      }
      a.consistent = consistent;
      a.min_residual = min_res;
      res.audit.push_back(a);
      if (in_clique[i]) res.accepted.push_back(pair_loops[i]);
    }
  }
  return res;
}

void write_pcm_audit(const std::vector<PcmLoopAudit>& audit,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::Io, "write_pcm_audit: cannot open " + path);
  }
  out << "query_robot,query_frame,match_robot,match_frame,partners,"
         "consistent,min_residual,accepted\n";
  char buf[64];
  for (const PcmLoopAudit& a : audit) {
    std::snprintf(buf, sizeof(buf), "%.6f", a.min_residual);
    out << a.loop.from.robot_id << ',' << a.loop.from.frame_index << ','
        << a.loop.to.robot_id << ',' << a.loop.to.frame_index << ','
        << a.partners << ',' << a.consistent << ',' << buf << ','
        << (a.accepted ? 1 : 0) << '\n';
  }
}

}  // namespace dcl
