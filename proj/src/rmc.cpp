#include "stqe/rmc.hpp"

#include "stqe/spatial_index.hpp"
#include "stqe/thread_pool.hpp"

namespace stqe {

VirtualReferenceFrame recolor(const PointCloud& current,
                              const PointCloud& reference) {
  current.validate();
  reference.validate();
  if (current.bit_depth != reference.bit_depth)
    throw Error("recolor: current and reference frames must share bit_depth");

  const std::size_t n = current.size();
  const std::size_t m = reference.size();

  // Nearest current point of every reference point. The queries are
  // independent, so this pass may run on the worker pool.
  SpatialIndex index(current.geometry);
  std::vector<int32_t> target(m);
  parallel_for(m, [&](std::size_t r) {
    int64_t d2;
    index.query_one(reference.point(r), 1, &target[r], &d2);
  });

  VirtualReferenceFrame out;
  out.cloud.geometry = current.geometry;
  out.cloud.bit_depth = current.bit_depth;
  out.cloud.attributes.resize(3 * n);
  out.provenance.assign(n, 0);

  // Serial accumulation in reference order keeps the sums deterministic.
  std::vector<double> sum(3 * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t t = std::size_t(target[r]);
    const float* a = reference.attr(r);
    sum[3 * t + 0] += a[0];
    sum[3 * t + 1] += a[1];
    sum[3 * t + 2] += a[2];
    out.provenance[t] += 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    float* dst = out.cloud.attr(i);
    if (out.provenance[i] > 0) {
      const double cnt = double(out.provenance[i]);
      dst[0] = float(sum[3 * i + 0] / cnt);
      dst[1] = float(sum[3 * i + 1] / cnt);
      dst[2] = float(sum[3 * i + 2] / cnt);
    } else {
      const float* src = current.attr(i);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
    }
  }
  return out;
}

std::pair<VirtualReferenceFrame, VirtualReferenceFrame> build_virtual_pair(
    const FrameTriplet& triplet) {
  triplet.validate();
  return {recolor(triplet.cur, triplet.prev), recolor(triplet.cur, triplet.next)};
}

}  // namespace stqe
