#include "dcl/kdtree.hpp"

#include <algorithm>

#include "dcl/error.hpp"

namespace dcl {
namespace {

bool hit_less(const KnnHit& a, const KnnHit& b) {
  return a.sq_dist < b.sq_dist ||
         (a.sq_dist == b.sq_dist && a.index < b.index);
}

}  // namespace

struct KdTree::SearchState {
  // Kept sorted ascending by (sq_dist, index); size bounded by k.
  std::vector<KnnHit> best;
};

KdTree::KdTree(std::size_t dim, std::vector<std::vector<double>> points)
    : dim_(dim), n_(points.size()) {
  data_.reserve(n_ * dim_);
  for (const auto& p : points) {
    if (p.size() != dim_) {
      fail(ErrorCode::Config, "KdTree: point dimension mismatch");
    }
    data_.insert(data_.end(), p.begin(), p.end());
  }
  build_all();
}

KdTree::KdTree(std::size_t dim, std::vector<double> flat)
    : dim_(dim), data_(std::move(flat)) {
  if (dim_ == 0 || data_.size() % dim_ != 0) {
    fail(ErrorCode::Config, "KdTree: flat size not a multiple of dim");
  }
  n_ = data_.size() / dim_;
  build_all();
}

void KdTree::build_all() {
  if (n_ == 0) return;
  std::vector<int> idx(n_);
  for (std::size_t i = 0; i < n_; ++i) idx[i] = static_cast<int>(i);
  nodes_.reserve(n_);
  root_ = build(idx, 0, static_cast<int>(n_), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % static_cast<int>(dim_);
  const int mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) {
                     const double va = data_[a * dim_ + axis];
                     const double vb = data_[b * dim_ + axis];
                     return va < vb || (va == vb && a < b);
                   });
  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{idx[mid], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

void KdTree::search(int node, const double* query, SearchState& state,
                    int k) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const double* p = &data_[n.point * dim_];
  double sq = 0.0;
  for (std::size_t d = 0; d < dim_; ++d) {
    const double diff = query[d] - p[d];
    sq += diff * diff;
  }
  const KnnHit hit{n.point, sq};
  if (static_cast<int>(state.best.size()) < k ||
      hit_less(hit, state.best.back())) {
    auto pos = std::lower_bound(state.best.begin(), state.best.end(), hit,
                                hit_less);
    state.best.insert(pos, hit);
    if (static_cast<int>(state.best.size()) > k) {
      state.best.pop_back();
    }
  }
  const double delta = query[n.axis] - p[n.axis];
  const int near_side = delta <= 0 ? n.left : n.right;
  const int far_side = delta <= 0 ? n.right : n.left;
  search(near_side, query, state, k);
  // Descend the far side on exact plane-distance ties as well: an equal
  // distance with a lower index still wins.
  if (static_cast<int>(state.best.size()) < k ||
      delta * delta <= state.best.back().sq_dist) {
    search(far_side, query, state, k);
  }
}

std::vector<KnnHit> KdTree::knn(const std::vector<double>& query,
                                int k) const {
  if (k < 1) {
    fail(ErrorCode::Config, "KdTree::knn: k must be >= 1");
  }
  if (query.size() != dim_) {
    fail(ErrorCode::Config, "KdTree::knn: query dimension mismatch");
  }
  SearchState state;
  search(root_, query.data(), state, k);
  return state.best;
}

KnnHit KdTree::nearest_within(const double* query, double max_sq_dist) const {
  if (n_ == 0) return {};
  SearchState state;
  search(root_, query, state, 1);
  if (!state.best.empty() && state.best[0].sq_dist <= max_sq_dist) {
    return state.best[0];
  }
  return {};
}

KnnHit KdTree::nearest_within(const std::vector<double>& query,
                              double max_sq_dist) const {
  if (query.size() != dim_) {
    fail(ErrorCode::Config, "KdTree::nearest_within: dimension mismatch");
  }
  return nearest_within(query.data(), max_sq_dist);
}

std::vector<KnnHit> brute_force_knn(const std::vector<std::vector<double>>& db,
                                    const std::vector<double>& query, int k) {
  std::vector<KnnHit> hits;
  hits.reserve(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    double sq = 0.0;
    for (std::size_t d = 0; d < query.size(); ++d) {
      const double diff = query[d] - db[i][d];
      sq += diff * diff;
    }
    hits.push_back(KnnHit{static_cast<int>(i), sq});
  }
  std::sort(hits.begin(), hits.end(), hit_less);
  if (static_cast<int>(hits.size()) > k) {
    hits.resize(k);
  }
  return hits;
}

}  // namespace dcl
