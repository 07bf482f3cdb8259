#pragma once

#include <cstdint>
#include <vector>

#include "stqe/network.hpp"
#include "stqe/patches.hpp"

namespace stqe {

// Everything one patch needs for a network pass: patch-local neighborhoods,
// kernel weights, and normalized attribute vectors. Neighborhoods are built
// once per patch and reused across epochs (geometry never changes).
struct PatchTask {
  std::vector<int32_t> indices;
  NeighborIndex nbrs;
  Tensor<float> weights;
  std::vector<float> cur, prev, next;  // normalized [0,1]
  std::vector<float> target;           // normalized; empty outside training
};

PatchTask make_patch_task(const Patch& patch, const PointCloud& cur,
                          const PointCloud& vprev, const PointCloud& vnext,
                          const PointCloud* original, Component component,
                          const NetworkConfig& cfg);

// Forward pass over one patch; returns the enhanced channel in normalized
// units (unclamped).
std::vector<float> run_patch_forward(ModelParams<float>& params,
                                     const PatchTask& task);

// Patch-generate/forward/fuse over one frame triplet. Equivalent to
// stqe_forward when patch_size covers the whole frame.
EnhancedFrame enhance_triplet(const FrameTriplet& triplet, Component component,
                              ModelParams<float>& params,
                              std::size_t patch_size, RunMode mode = RunMode::infer);

// Framewise enhancement of a sequence; frame t uses neighbors t-1 and t+1,
// boundary frames mirror the available neighbor.
std::vector<EnhancedFrame> enhance_sequence(const std::vector<PointCloud>& frames,
                                            Component component,
                                            ModelParams<float>& params,
                                            std::size_t patch_size);

// Mirror rule for reference frame indices at sequence boundaries.
std::size_t mirror_index(std::ptrdiff_t i, std::size_t count);

}  // namespace stqe
