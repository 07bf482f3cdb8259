#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stqe/common.hpp"

namespace stqe {

// Row i lists the k nearest target points to query i, sorted by
// (distance, index) ascending. Distances are unsquared Euclidean values;
// since coordinates are integers the squared distance is exact in int64 and
// the reported distance is its correctly rounded sqrt, so two exact searches
// produce bit-identical results.
struct NeighborIndex {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<int32_t> indices;    // n*k
  std::vector<double> distances;  // n*k

  const int32_t* row_indices(std::size_t i) const { return indices.data() + i * k; }
  const double* row_distances(std::size_t i) const { return distances.data() + i * k; }
};

// Median-split kd-tree over integer geometry. Build order is deterministic
// (median by (coordinate, index)), queries are exact with ties broken toward
// the lower point index.
class SpatialIndex {
public:
  explicit SpatialIndex(std::span<const int32_t> geometry);  // n*3 rows

  std::size_t size() const { return n_; }

  // k nearest for one query point; out_idx/out_dist2 must hold k entries.
  void query_one(const int32_t* q, std::size_t k, int32_t* out_idx,
                 int64_t* out_dist2) const;

private:
  struct Node {
    int32_t split_val = 0;
    int16_t axis = -1;       // -1 marks a leaf
    int32_t left = -1, right = -1;
    int32_t begin = 0, end = 0;  // leaf range into perm_
  };

  int32_t build(int32_t begin, int32_t end);

  struct BestK;
  void search(int32_t node, const int32_t* q, BestK& best) const;

  std::size_t n_ = 0;
  std::vector<int32_t> pts_;   // copy of geometry
  std::vector<int32_t> perm_;  // point ids, permuted by the build
  std::vector<Node> nodes_;
  int32_t root_ = -1;
};

SpatialIndex build_index(std::span<const int32_t> geometry);

NeighborIndex query_knn(const SpatialIndex& index,
                        std::span<const int32_t> queries, std::size_t k);

NeighborIndex brute_force_knn(std::span<const int32_t> geometry,
                              std::span<const int32_t> queries, std::size_t k);

// Self-query convenience: k nearest neighbours of every point of a cloud
// within itself (first neighbour is the point, at distance 0).
NeighborIndex self_knn(std::span<const int32_t> geometry, std::size_t k);

}  // namespace stqe
