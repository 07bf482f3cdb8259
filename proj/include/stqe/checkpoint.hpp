#pragma once

#include <iosfwd>
#include <string>

#include "stqe/network.hpp"

namespace stqe {

// Checkpoint layout (little-endian):
//   magic "STQE", u32 format version,
//   u32 component id, u32 k, f32 sigma2, f32 leaky_slope,
//   u32 flags (bit0 squared_kernel, bit1 shared_branch),
//   u32 width-table length, u32 widths[...]
//     (branch..., merge..., res_layers, gnfa_width, stf...),
//   u32 tensor count, then per tensor:
//   u32 name length, name bytes, u32 rank, u32 extents[rank], f32 values.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::string& path);

// Human-readable layout dump for the describe-checkpoint command.
void describe_checkpoint(const std::string& path, std::ostream& out);

}  // namespace stqe
