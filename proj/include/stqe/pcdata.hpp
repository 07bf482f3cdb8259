#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stqe/common.hpp"

namespace stqe {

enum class Component : int { Y = 0, Cb = 1, Cr = 2 };

const char* component_name(Component c);
Component component_from_name(const std::string& name);

enum class ColorMatrix { bt709, bt601 };

// Full-range conversion. Outputs are clamped to [0,255].
std::array<double, 3> rgb_to_ycbcr(double r, double g, double b,
                                   ColorMatrix m = ColorMatrix::bt709);
std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr,
                                   ColorMatrix m = ColorMatrix::bt709);

// Voxelized point cloud: integer geometry, one YCbCr attribute triple per
// point. Attributes are kept as 32-bit reals end to end; quantization to
// 8-bit codes happens only on rgb8 export.
struct PointCloud {
  std::vector<int32_t> geometry;  // n*3, row-major x,y,z
  std::vector<float> attributes;  // n*3, row-major Y,Cb,Cr
  int bit_depth = 10;

  std::size_t size() const { return geometry.size() / 3; }

  const int32_t* point(std::size_t i) const { return geometry.data() + 3 * i; }
  int32_t* point(std::size_t i) { return geometry.data() + 3 * i; }
  const float* attr(std::size_t i) const { return attributes.data() + 3 * i; }
  float* attr(std::size_t i) { return attributes.data() + 3 * i; }

  float attr(std::size_t i, Component c) const {
    return attributes[3 * i + std::size_t(c)];
  }

  std::vector<float> channel(Component c) const;
  void set_channel(Component c, const std::vector<float>& values);

  // Throws Error naming the violated invariant.
  void validate() const;
};

struct FrameTriplet {
  PointCloud prev, cur, next;
  void validate() const;
};

struct AttributeVector {
  std::vector<float> values;
  Component component_id = Component::Y;
};

// ---------------------------------------------------------------- PLY -----

enum class PlyEncoding { ascii, binary_little_endian };
enum class PlyColorMode { rgb8, ycbcr_float };

struct PlyReadOptions {
  bool dedup = false;  // average attributes of duplicate coordinates
  ColorMatrix matrix = ColorMatrix::bt709;
  int bit_depth_override = 0;              // 0: take from comment or infer
  std::vector<std::string>* warnings = nullptr;
};

PointCloud read_ply(const std::string& path, const PlyReadOptions& opts = {});

struct PlyWriteOptions {
  PlyEncoding encoding = PlyEncoding::binary_little_endian;
  PlyColorMode color_mode = PlyColorMode::ycbcr_float;
  ColorMatrix matrix = ColorMatrix::bt709;
};

void write_ply(const PointCloud& pc, const std::string& path,
               const PlyWriteOptions& opts = {});

// Lists *.ply in a directory, sorted by filename (the frame order).
std::vector<std::string> list_ply_files(const std::string& dir);

// Packs voxel coordinates into one key; valid for bit_depth <= 16.
inline uint64_t pack_coord(int32_t x, int32_t y, int32_t z) {
  return (uint64_t(uint32_t(x)) << 42) | (uint64_t(uint32_t(y)) << 21) |
         uint64_t(uint32_t(z));
}

}  // namespace stqe
