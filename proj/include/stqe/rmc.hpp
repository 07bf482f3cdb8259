#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "stqe/pcdata.hpp"

namespace stqe {

// A frame whose geometry is the current frame's geometry (bitwise) and whose
// attributes were remapped from a reference frame. provenance[i] counts the
// reference points whose nearest current point is i; 0 means the attribute
// was kept from the current frame.
struct VirtualReferenceFrame {
  PointCloud cloud;
  std::vector<uint32_t> provenance;
};

// Remaps reference colors onto the current geometry: every reference point
// is assigned to its nearest current point (ties to the lower index); each
// current point takes the arithmetic per-channel mean of the reference
// attributes mapped to it, or keeps its own attribute when none mapped.
VirtualReferenceFrame recolor(const PointCloud& current,
                              const PointCloud& reference);

// (recolor(cur, prev), recolor(cur, next))
std::pair<VirtualReferenceFrame, VirtualReferenceFrame> build_virtual_pair(
    const FrameTriplet& triplet);

}  // namespace stqe
