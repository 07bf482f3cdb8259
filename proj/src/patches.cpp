#include "stqe/patches.hpp"

#include <algorithm>
#include <limits>

#include "stqe/spatial_index.hpp"

namespace stqe {

std::vector<Patch> generate_patches(const PointCloud& frame,
                                    std::size_t patch_size) {
  const std::size_t n = frame.size();
  if (n == 0) throw Error("generate_patches: empty frame");
  if (patch_size == 0) throw Error("generate_patches: patch_size must be positive");

  if (patch_size >= n) {
    Patch all;
    all.indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) all.indices[i] = int32_t(i);
    return {all};
  }

  SpatialIndex index(frame.geometry);
  std::vector<Patch> patches;
  std::vector<bool> covered(n, false);
  std::size_t n_covered = 0;
  // squared distance to the nearest seed so far
  std::vector<int64_t> min_d2(n, std::numeric_limits<int64_t>::max());

  std::size_t seed = 0;  // deterministic start
  std::vector<int64_t> d2(patch_size);
  while (n_covered < n) {
    Patch patch;
    patch.indices.resize(patch_size);
    index.query_one(frame.point(seed), patch_size, patch.indices.data(),
                    d2.data());
    for (int32_t idx : patch.indices) {
      if (!covered[std::size_t(idx)]) {
        covered[std::size_t(idx)] = true;
        ++n_covered;
      }
    }
    // farthest-point update against the new seed
    const int32_t* s = frame.point(seed);
    for (std::size_t i = 0; i < n; ++i) {
      const int32_t* p = frame.point(i);
      const int64_t dx = int64_t(p[0]) - s[0];
      const int64_t dy = int64_t(p[1]) - s[1];
      const int64_t dz = int64_t(p[2]) - s[2];
      min_d2[i] = std::min(min_d2[i], dx * dx + dy * dy + dz * dz);
    }
    patches.push_back(std::move(patch));
    if (n_covered == n) break;
    // next seed: farthest uncovered point, ties to the lower index
    int64_t best = -1;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!covered[i] && min_d2[i] > best) {
        best = min_d2[i];
        pick = i;
      }
    seed = pick;
  }
  return patches;
}

std::vector<float> fuse_patches(const std::vector<Patch>& patches,
                                const std::vector<std::vector<float>>& predictions,
                                std::size_t n_points) {
  if (patches.size() != predictions.size())
    throw Error("fuse_patches: patch/prediction count mismatch");
  std::vector<double> sum(n_points, 0.0);
  std::vector<uint32_t> cnt(n_points, 0);
  for (std::size_t p = 0; p < patches.size(); ++p) {
    const Patch& patch = patches[p];
    const std::vector<float>& pred = predictions[p];
    if (pred.size() != patch.indices.size())
      throw Error("fuse_patches: prediction length mismatch in patch " +
                  std::to_string(p));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      sum[std::size_t(patch.indices[i])] += double(pred[i]);
      cnt[std::size_t(patch.indices[i])] += 1;
    }
  }
  std::vector<float> out(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    if (cnt[i] == 0)
      throw Error("fuse_patches: point " + std::to_string(i) +
                  " is not covered by any patch");
    out[i] = float(sum[i] / double(cnt[i]));
  }
  return out;
}

}  // namespace stqe
