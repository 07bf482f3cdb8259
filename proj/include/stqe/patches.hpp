#pragma once

#include <cstdint>
#include <vector>

#include "stqe/pcdata.hpp"

namespace stqe {

// Point indices of one patch of the parent frame.
struct Patch {
  std::vector<int32_t> indices;
};

// Farthest-point-sampled seeds with k-nearest patches: the first seed is
// point 0; each next seed is the uncovered point farthest from all previous
// seeds (ties to the lower index); a patch is the patch_size nearest points
// to its seed. Seeds are added until every point is covered, so the union of
// patches is always the whole frame. patch_size > n collapses to a single
// whole-cloud patch.
std::vector<Patch> generate_patches(const PointCloud& frame,
                                    std::size_t patch_size);

// Per-point arithmetic mean of the predictions of all covering patches.
// predictions[p] holds one value per index of patches[p].
std::vector<float> fuse_patches(const std::vector<Patch>& patches,
                                const std::vector<std::vector<float>>& predictions,
                                std::size_t n_points);

}  // namespace stqe
