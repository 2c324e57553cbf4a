#pragma once

#include <cstddef>
#include <vector>

namespace dcl {

struct KnnHit {
  int index = -1;
  double sq_dist = 0.0;
};

/// Exact k-nearest-neighbor tree over fixed-dimension points, stored flat.
/// Dimension is a runtime parameter so the same structure serves 3-D clouds
/// and row keys. Distance ties break toward the lower insertion index.
class KdTree {
 public:
  KdTree() = default;
  KdTree(std::size_t dim, std::vector<std::vector<double>> points);
  /// Flat row-major storage, size a multiple of dim.
  KdTree(std::size_t dim, std::vector<double> flat);

  /// k best hits sorted by (distance, index). Fewer when the tree is small.
  std::vector<KnnHit> knn(const std::vector<double>& query, int k) const;

  /// Nearest hit with squared distance <= max_sq_dist, or index -1.
  KnnHit nearest_within(const std::vector<double>& query,
                        double max_sq_dist) const;
  KnnHit nearest_within(const double* query, double max_sq_dist) const;

  std::size_t size() const { return n_; }
  std::size_t dim() const { return dim_; }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  void build_all();
  int build(std::vector<int>& idx, int lo, int hi, int depth);

  struct SearchState;
  void search(int node, const double* query, SearchState& state, int k) const;

  std::size_t dim_ = 0;
  std::size_t n_ = 0;
  std::vector<double> data_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Brute-force oracle with the same tie-break rule; test reference and small
/// database fallback.
std::vector<KnnHit> brute_force_knn(const std::vector<std::vector<double>>& db,
                                    const std::vector<double>& query, int k);

}  // namespace dcl
