#include "stqe/spatial_index.hpp"

#include <algorithm>
#include <cmath>

#include "stqe/thread_pool.hpp"

namespace stqe {

namespace {

constexpr int kLeafSize = 16;

inline int64_t dist2(const int32_t* a, const int32_t* b) {
  const int64_t dx = int64_t(a[0]) - b[0];
  const int64_t dy = int64_t(a[1]) - b[1];
  const int64_t dz = int64_t(a[2]) - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// (distance², index) with the lexicographic order used everywhere: the worst
// candidate is the largest pair.
struct Cand {
  int64_t d2;
  int32_t idx;
  bool operator<(const Cand& o) const {
    return d2 < o.d2 || (d2 == o.d2 && idx < o.idx);
  }
};

}  // namespace

struct SpatialIndex::BestK {
  std::size_t k;
  std::vector<Cand> heap;  // max-heap on Cand::operator<

  explicit BestK(std::size_t kk) : k(kk) { heap.reserve(kk); }

  bool full() const { return heap.size() == k; }
  int64_t worst_d2() const { return heap.front().d2; }

  void offer(int64_t d2, int32_t idx) {
    if (!full()) {
      heap.push_back({d2, idx});
      std::push_heap(heap.begin(), heap.end());
      return;
    }
    const Cand c{d2, idx};
    if (c < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end());
    }
  }
};

SpatialIndex::SpatialIndex(std::span<const int32_t> geometry) {
  if (geometry.size() % 3 != 0) throw Error("build_index: geometry must be n*3");
  n_ = geometry.size() / 3;
  if (n_ == 0) throw Error("build_index: n must be ≥ 1");
  pts_.assign(geometry.begin(), geometry.end());
  perm_.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) perm_[i] = int32_t(i);
  nodes_.reserve(2 * n_ / kLeafSize + 2);
  root_ = build(0, int32_t(n_));
}

int32_t SpatialIndex::build(int32_t begin, int32_t end) {
  const int32_t id = int32_t(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  // split on the widest axis (lowest axis wins ties)
  int32_t lo[3], hi[3];
  for (int a = 0; a < 3; ++a) lo[a] = hi[a] = pts_[3 * std::size_t(perm_[begin]) + a];
  for (int32_t i = begin + 1; i < end; ++i)
    for (int a = 0; a < 3; ++a) {
      const int32_t v = pts_[3 * std::size_t(perm_[i]) + a];
      lo[a] = std::min(lo[a], v);
      hi[a] = std::max(hi[a], v);
    }
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;

  const int32_t mid = begin + (end - begin) / 2;
  std::nth_element(perm_.begin() + begin, perm_.begin() + mid,
                   perm_.begin() + end, [&](int32_t a, int32_t b) {
                     const int32_t va = pts_[3 * std::size_t(a) + axis];
                     const int32_t vb = pts_[3 * std::size_t(b) + axis];
                     return va < vb || (va == vb && a < b);
                   });
  const int32_t split_val = pts_[3 * std::size_t(perm_[mid]) + axis];
  const int32_t left = build(begin, mid);
  const int32_t right = build(mid, end);
  Node& nd = nodes_[id];
  nd.axis = int16_t(axis);
  nd.split_val = split_val;
  nd.left = left;
  nd.right = right;
  return id;
}

void SpatialIndex::search(int32_t node, const int32_t* q, BestK& best) const {
  const Node& nd = nodes_[std::size_t(node)];
  if (nd.axis < 0) {
    for (int32_t i = nd.begin; i < nd.end; ++i) {
      const int32_t idx = perm_[std::size_t(i)];
      best.offer(dist2(q, pts_.data() + 3 * std::size_t(idx)), idx);
    }
    return;
  }
  const int64_t diff = int64_t(q[nd.axis]) - nd.split_val;
  const int32_t near = diff < 0 ? nd.left : nd.right;
  const int32_t far = diff < 0 ? nd.right : nd.left;
  search(near, q, best);
  // The plane distance lower-bounds every point beyond the split; on
  // equality a lower index could still displace the worst candidate, so
  // only a strictly larger bound prunes.
  if (!best.full() || diff * diff <= best.worst_d2()) search(far, q, best);
}

void SpatialIndex::query_one(const int32_t* q, std::size_t k, int32_t* out_idx,
                             int64_t* out_dist2) const {
  if (k > n_) throw Error("query_knn: k exceeds the number of indexed points");
  BestK best(k);
  search(root_, q, best);
  std::sort_heap(best.heap.begin(), best.heap.end());
  for (std::size_t j = 0; j < k; ++j) {
    out_idx[j] = best.heap[j].idx;
    out_dist2[j] = best.heap[j].d2;
  }
}

SpatialIndex build_index(std::span<const int32_t> geometry) {
  return SpatialIndex(geometry);
}

NeighborIndex query_knn(const SpatialIndex& index,
                        std::span<const int32_t> queries, std::size_t k) {
  if (queries.size() % 3 != 0) throw Error("query_knn: queries must be m*3");
  const std::size_t m = queries.size() / 3;
  if (k == 0) throw Error("query_knn: k must be positive");
  if (k > index.size())
    throw Error("query_knn: k exceeds the number of indexed points");
  NeighborIndex out;
  out.n = m;
  out.k = k;
  out.indices.resize(m * k);
  out.distances.resize(m * k);
  parallel_for(m, [&](std::size_t i) {
    std::vector<int64_t> d2(k);
    index.query_one(queries.data() + 3 * i, k, out.indices.data() + i * k,
                    d2.data());
    for (std::size_t j = 0; j < k; ++j)
      out.distances[i * k + j] = std::sqrt(double(d2[j]));
  });
  return out;
}

NeighborIndex brute_force_knn(std::span<const int32_t> geometry,
                              std::span<const int32_t> queries, std::size_t k) {
  if (geometry.size() % 3 != 0 || queries.size() % 3 != 0)
    throw Error("brute_force_knn: inputs must be n*3 / m*3");
  const std::size_t n = geometry.size() / 3;
  const std::size_t m = queries.size() / 3;
  if (k == 0 || k > n) throw Error("brute_force_knn: need 0 < k <= n");
  NeighborIndex out;
  out.n = m;
  out.k = k;
  out.indices.resize(m * k);
  out.distances.resize(m * k);
  std::vector<Cand> all(n);
  for (std::size_t i = 0; i < m; ++i) {
    const int32_t* q = queries.data() + 3 * i;
    for (std::size_t j = 0; j < n; ++j)
      all[j] = {dist2(q, geometry.data() + 3 * j), int32_t(j)};
    std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(k), all.end());
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[i * k + j] = all[j].idx;
      out.distances[i * k + j] = std::sqrt(double(all[j].d2));
    }
  }
  return out;
}

NeighborIndex self_knn(std::span<const int32_t> geometry, std::size_t k) {
  SpatialIndex index(geometry);
  return query_knn(index, geometry, k);
}

}  // namespace stqe
