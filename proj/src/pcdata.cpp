#include "stqe/pcdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace stqe {

const char* component_name(Component c) {
  switch (c) {
    case Component::Y: return "Y";
    case Component::Cb: return "Cb";
    case Component::Cr: return "Cr";
  }
  return "?";
}

Component component_from_name(const std::string& name) {
  if (name == "Y" || name == "y") return Component::Y;
  if (name == "Cb" || name == "cb" || name == "CB") return Component::Cb;
  if (name == "Cr" || name == "cr" || name == "CR") return Component::Cr;
  throw Error("unknown color component '" + name + "' (expected Y, Cb or Cr)");
}

namespace {

struct MatrixCoeffs {
  double kr, kb;
};

MatrixCoeffs coeffs(ColorMatrix m) {
  switch (m) {
    case ColorMatrix::bt601: return {0.299, 0.114};
    case ColorMatrix::bt709: break;
  }
  return {0.2126, 0.0722};
}

double clamp255(double v) { return std::min(255.0, std::max(0.0, v)); }

}  // namespace

std::array<double, 3> rgb_to_ycbcr(double r, double g, double b,
                                   ColorMatrix m) {
  const auto [kr, kb] = coeffs(m);
  const double y = kr * r + (1.0 - kr - kb) * g + kb * b;
  const double cb = (b - y) / (2.0 * (1.0 - kb)) + 128.0;
  const double cr = (r - y) / (2.0 * (1.0 - kr)) + 128.0;
  return {clamp255(y), clamp255(cb), clamp255(cr)};
}

std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr,
                                   ColorMatrix m) {
  const auto [kr, kb] = coeffs(m);
  const double kg = 1.0 - kr - kb;
  const double r = y + 2.0 * (1.0 - kr) * (cr - 128.0);
  const double b = y + 2.0 * (1.0 - kb) * (cb - 128.0);
  const double g = (y - kr * r - kb * b) / kg;
  return {clamp255(r), clamp255(g), clamp255(b)};
}

std::vector<float> PointCloud::channel(Component c) const {
  const std::size_t n = size();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = attributes[3 * i + std::size_t(c)];
  return out;
}

void PointCloud::set_channel(Component c, const std::vector<float>& values) {
  if (values.size() != size())
    throw Error("set_channel: length mismatch with point count");
  for (std::size_t i = 0; i < size(); ++i)
    attributes[3 * i + std::size_t(c)] = values[i];
}

void PointCloud::validate() const {
  const std::size_t n = size();
  if (n == 0) throw Error("invalid point cloud: n must be ≥ 1");
  if (geometry.size() != 3 * n || attributes.size() != 3 * n)
    throw Error("invalid point cloud: geometry and attributes must both have n rows");
  if (bit_depth < 1 || bit_depth > 16)
    throw Error("invalid point cloud: bit_depth must be in [1,16]");
  const int64_t limit = int64_t(1) << bit_depth;
  for (std::size_t i = 0; i < 3 * n; ++i) {
    const int32_t v = geometry[i];
    if (v < 0 || int64_t(v) >= limit)
      throw Error("invalid point cloud: coordinate out of [0, 2^bit_depth) at point " +
                  std::to_string(i / 3));
  }
  for (std::size_t i = 0; i < 3 * n; ++i) {
    const float a = attributes[i];
    if (!(a >= 0.0f && a <= 255.0f))
      throw Error("invalid point cloud: attribute out of [0,255] at point " +
                  std::to_string(i / 3));
  }
  std::unordered_map<uint64_t, std::size_t> seen;
  seen.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int32_t* p = point(i);
    const auto [it, inserted] = seen.emplace(pack_coord(p[0], p[1], p[2]), i);
    if (!inserted)
      throw Error("invalid point cloud: duplicate coordinates at point " +
                  std::to_string(i) + " (first seen at point " +
                  std::to_string(it->second) + ")");
  }
}

void FrameTriplet::validate() const {
  prev.validate();
  cur.validate();
  next.validate();
  if (prev.bit_depth != cur.bit_depth || next.bit_depth != cur.bit_depth)
    throw Error("invalid frame triplet: frames must share bit_depth");
}

// ------------------------------------------------------------------ PLY ---

namespace {

enum class PType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::size_t ptype_size(PType t) {
  switch (t) {
    case PType::i8:
    case PType::u8: return 1;
    case PType::i16:
    case PType::u16: return 2;
    case PType::i32:
    case PType::u32:
    case PType::f32: return 4;
    case PType::f64: return 8;
  }
  return 0;
}

bool parse_ptype(const std::string& s, PType& out) {
  if (s == "char" || s == "int8") out = PType::i8;
  else if (s == "uchar" || s == "uint8") out = PType::u8;
  else if (s == "short" || s == "int16") out = PType::i16;
  else if (s == "ushort" || s == "uint16") out = PType::u16;
  else if (s == "int" || s == "int32") out = PType::i32;
  else if (s == "uint" || s == "uint32") out = PType::u32;
  else if (s == "float" || s == "float32") out = PType::f32;
  else if (s == "double" || s == "float64") out = PType::f64;
  else return false;
  return true;
}

double decode_scalar(const unsigned char* p, PType t) {
  switch (t) {
    case PType::i8: return double(*reinterpret_cast<const int8_t*>(p));
    case PType::u8: return double(*p);
    case PType::i16: {
      int16_t v;
      std::memcpy(&v, p, 2);
      return double(v);
    }
    case PType::u16: {
      uint16_t v;
      std::memcpy(&v, p, 2);
      return double(v);
    }
    case PType::i32: {
      int32_t v;
      std::memcpy(&v, p, 4);
      return double(v);
    }
    case PType::u32: {
      uint32_t v;
      std::memcpy(&v, p, 4);
      return double(v);
    }
    case PType::f32: {
      float v;
      std::memcpy(&v, p, 4);
      return double(v);
    }
    case PType::f64: {
      double v;
      std::memcpy(&v, p, 8);
      return v;
    }
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PType type = PType::f32;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

std::string read_header_line(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(path + ": malformed header: unexpected end of file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

int32_t to_voxel_coord(double v, std::size_t point, const std::string& path) {
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-6)
    throw Error(path + ": non-integer coordinate at point " + std::to_string(point));
  if (r < 0.0)
    throw Error(path + ": negative coordinate at point " + std::to_string(point));
  if (r > 2097151.0)
    throw Error(path + ": coordinate exceeds supported voxel range at point " +
                std::to_string(point));
  return int32_t(r);
}

}  // namespace

PointCloud read_ply(const std::string& path, const PlyReadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open file");

  auto warn = [&](const std::string& msg) {
    if (opts.warnings) opts.warnings->push_back(path + ": " + msg);
  };

  if (read_header_line(in, path) != "ply")
    throw Error(path + ": malformed header: missing 'ply' magic");

  bool binary = false;
  bool have_format = false;
  int comment_bit_depth = 0;
  std::vector<PlyElement> elements;

  for (;;) {
    const std::string line = read_header_line(in, path);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw Error(path + ": malformed format line");
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else throw Error(path + ": unsupported format '" + tok[1] + "'");
      have_format = true;
    } else if (tok[0] == "comment" || tok[0] == "obj_info") {
      if (tok.size() >= 3 && tok[1] == "bit_depth")
        comment_bit_depth = std::atoi(tok[2].c_str());
    } else if (tok[0] == "element") {
      if (tok.size() < 3) throw Error(path + ": malformed element line");
      PlyElement el;
      el.name = tok[1];
      el.count = std::size_t(std::strtoull(tok[2].c_str(), nullptr, 10));
      elements.push_back(el);
    } else if (tok[0] == "property") {
      if (elements.empty())
        throw Error(path + ": malformed header: property before element");
      PlyProperty prop;
      if (tok.size() >= 5 && tok[1] == "list") {
        prop.is_list = true;
        prop.name = tok.back();
      } else if (tok.size() >= 3) {
        if (!parse_ptype(tok[1], prop.type))
          throw Error(path + ": unsupported property type '" + tok[1] + "'");
        prop.name = tok[2];
      } else {
        throw Error(path + ": malformed property line");
      }
      elements.back().props.push_back(prop);
    } else {
      warn("ignoring unknown header line: " + tok[0]);
    }
  }
  if (!have_format) throw Error(path + ": malformed header: missing format line");

  const auto vertex_it =
      std::find_if(elements.begin(), elements.end(),
                   [](const PlyElement& e) { return e.name == "vertex"; });
  if (vertex_it == elements.end())
    throw Error(path + ": malformed header: no vertex element");
  const PlyElement& vertex = *vertex_it;

  // Map the properties this reader understands.
  int ix = -1, iy = -1, iz = -1;
  int ir = -1, ig = -1, ib = -1;
  int iY = -1, iCb = -1, iCr = -1;
  for (std::size_t p = 0; p < vertex.props.size(); ++p) {
    const PlyProperty& prop = vertex.props[p];
    if (prop.is_list)
      throw Error(path + ": unsupported list property '" + prop.name +
                  "' in vertex element");
    const std::string& nm = prop.name;
    if (nm == "x") ix = int(p);
    else if (nm == "y") iy = int(p);
    else if (nm == "z") iz = int(p);
    else if (nm == "red") ir = int(p);
    else if (nm == "green") ig = int(p);
    else if (nm == "blue") ib = int(p);
    else if (nm == "Y") iY = int(p);
    else if (nm == "Cb") iCb = int(p);
    else if (nm == "Cr") iCr = int(p);
    else warn("skipping unknown vertex property '" + nm + "'");
  }
  if (ix < 0 || iy < 0 || iz < 0)
    throw Error(path + ": vertex element must have x, y, z properties");
  const bool has_rgb = ir >= 0 && ig >= 0 && ib >= 0;
  const bool has_ycc = iY >= 0 && iCb >= 0 && iCr >= 0;
  if (has_rgb && has_ycc)
    throw Error(path + ": vertex element has both RGB and YCbCr color properties");
  if (!has_rgb && !has_ycc)
    throw Error(path + ": vertex element has no color properties "
                       "(need red,green,blue or Y,Cb,Cr)");
  if (has_rgb)
    for (int p : {ir, ig, ib})
      if (vertex.props[std::size_t(p)].type != PType::u8)
        throw Error(path + ": unsupported property type for '" +
                    vertex.props[std::size_t(p)].name + "' (expected uchar)");
  if (has_ycc)
    for (int p : {iY, iCb, iCr})
      if (vertex.props[std::size_t(p)].type != PType::f32 &&
          vertex.props[std::size_t(p)].type != PType::f64)
        throw Error(path + ": unsupported property type for '" +
                    vertex.props[std::size_t(p)].name + "' (expected float)");

  // Raw per-point values for every vertex property.
  const std::size_t nprops = vertex.props.size();
  std::vector<double> raw(vertex.count * nprops);

  if (binary) {
    for (const PlyElement& el : elements) {
      if (el.name == "vertex") break;
      std::size_t stride = 0;
      for (const PlyProperty& p : el.props) {
        if (p.is_list)
          throw Error(path + ": cannot skip list property in element '" +
                      el.name + "' preceding vertex data");
        stride += ptype_size(p.type);
      }
      in.seekg(std::streamoff(el.count * stride), std::ios::cur);
    }
    std::size_t stride = 0;
    std::vector<std::size_t> offsets(nprops);
    for (std::size_t p = 0; p < nprops; ++p) {
      offsets[p] = stride;
      stride += ptype_size(vertex.props[p].type);
    }
    std::vector<unsigned char> blob(vertex.count * stride);
    in.read(reinterpret_cast<char*>(blob.data()), std::streamsize(blob.size()));
    if (std::size_t(in.gcount()) != blob.size())
      throw Error(path + ": truncated binary vertex data");
    for (std::size_t i = 0; i < vertex.count; ++i) {
      const unsigned char* rec = blob.data() + i * stride;
      for (std::size_t p = 0; p < nprops; ++p)
        raw[i * nprops + p] = decode_scalar(rec + offsets[p], vertex.props[p].type);
    }
  } else {
    for (const PlyElement& el : elements) {
      if (el.name == "vertex") break;
      for (std::size_t i = 0; i < el.count; ++i) read_header_line(in, path);
    }
    for (std::size_t i = 0; i < vertex.count; ++i) {
      const std::string line = read_header_line(in, path);
      const auto tok = split_ws(line);
      if (tok.size() != nprops)
        throw Error(path + ": malformed ascii vertex line " + std::to_string(i) +
                    " (expected " + std::to_string(nprops) + " values)");
      for (std::size_t p = 0; p < nprops; ++p)
        raw[i * nprops + p] = std::strtod(tok[p].c_str(), nullptr);
    }
  }

  PointCloud pc;
  pc.geometry.resize(vertex.count * 3);
  pc.attributes.resize(vertex.count * 3);
  int32_t max_coord = 0;
  for (std::size_t i = 0; i < vertex.count; ++i) {
    const double* rec = raw.data() + i * nprops;
    int32_t* g3 = pc.point(i);
    g3[0] = to_voxel_coord(rec[ix], i, path);
    g3[1] = to_voxel_coord(rec[iy], i, path);
    g3[2] = to_voxel_coord(rec[iz], i, path);
    max_coord = std::max({max_coord, g3[0], g3[1], g3[2]});
    float* a3 = pc.attr(i);
    if (has_rgb) {
      const auto ycc = rgb_to_ycbcr(rec[ir], rec[ig], rec[ib], opts.matrix);
      a3[0] = float(ycc[0]);
      a3[1] = float(ycc[1]);
      a3[2] = float(ycc[2]);
    } else {
      a3[0] = float(rec[iY]);
      a3[1] = float(rec[iCb]);
      a3[2] = float(rec[iCr]);
    }
  }

  if (opts.bit_depth_override > 0) {
    pc.bit_depth = opts.bit_depth_override;
  } else if (comment_bit_depth > 0) {
    pc.bit_depth = comment_bit_depth;
  } else {
    int bits = 1;
    while ((int64_t(1) << bits) <= max_coord) ++bits;
    pc.bit_depth = bits;
  }

  if (opts.dedup && pc.size() > 0) {
    std::unordered_map<uint64_t, std::size_t> first;  // key -> output index
    first.reserve(pc.size() * 2);
    std::vector<int32_t> geo;
    std::vector<double> sum;
    std::vector<std::size_t> cnt;
    for (std::size_t i = 0; i < pc.size(); ++i) {
      const int32_t* p = pc.point(i);
      const uint64_t key = pack_coord(p[0], p[1], p[2]);
      auto [it, inserted] = first.emplace(key, cnt.size());
      if (inserted) {
        geo.insert(geo.end(), p, p + 3);
        sum.insert(sum.end(), {0.0, 0.0, 0.0});
        cnt.push_back(0);
      }
      const std::size_t o = it->second;
      for (int c = 0; c < 3; ++c) sum[3 * o + c] += double(pc.attr(i)[c]);
      cnt[o] += 1;
    }
    if (cnt.size() != pc.size())
      warn("merged " + std::to_string(pc.size() - cnt.size()) +
           " duplicate points by attribute averaging");
    PointCloud merged;
    merged.bit_depth = pc.bit_depth;
    merged.geometry = std::move(geo);
    merged.attributes.resize(cnt.size() * 3);
    for (std::size_t i = 0; i < cnt.size(); ++i)
      for (int c = 0; c < 3; ++c)
        merged.attributes[3 * i + c] = float(sum[3 * i + c] / double(cnt[i]));
    pc = std::move(merged);
  }

  pc.validate();
  return pc;
}

void write_ply(const PointCloud& pc, const std::string& path,
               const PlyWriteOptions& opts) {
  pc.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");

  const bool binary = opts.encoding == PlyEncoding::binary_little_endian;
  const bool rgb8 = opts.color_mode == PlyColorMode::rgb8;
  out << "ply\n"
      << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
      << "comment bit_depth " << pc.bit_depth << "\n"
      << "element vertex " << pc.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (rgb8)
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  else
    out << "property float Y\nproperty float Cb\nproperty float Cr\n";
  out << "end_header\n";

  const std::size_t n = pc.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int32_t* g3 = pc.point(i);
    const float* a3 = pc.attr(i);
    unsigned char rgb[3] = {0, 0, 0};
    if (rgb8) {
      const auto v = ycbcr_to_rgb(a3[0], a3[1], a3[2], opts.matrix);
      for (int c = 0; c < 3; ++c)
        rgb[c] = static_cast<unsigned char>(
            std::min(255.0, std::max(0.0, std::round(v[std::size_t(c)]))));
    }
    if (binary) {
      const float xyz[3] = {float(g3[0]), float(g3[1]), float(g3[2])};
      out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
      if (rgb8)
        out.write(reinterpret_cast<const char*>(rgb), 3);
      else
        out.write(reinterpret_cast<const char*>(a3), 3 * sizeof(float));
    } else {
      char buf[160];
      if (rgb8)
        std::snprintf(buf, sizeof(buf), "%d %d %d %u %u %u\n", g3[0], g3[1],
                      g3[2], rgb[0], rgb[1], rgb[2]);
      else
        std::snprintf(buf, sizeof(buf), "%d %d %d %.9g %.9g %.9g\n", g3[0],
                      g3[1], g3[2], double(a3[0]), double(a3[1]), double(a3[2]));
      out << buf;
    }
  }
  out.flush();
  if (!out) throw Error(path + ": I/O failure while writing");
}

std::vector<std::string> list_ply_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(dir + ": not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".ply")
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace stqe
