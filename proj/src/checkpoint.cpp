#include "stqe/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <ostream>
#include <vector>

namespace stqe {

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_f32(std::ostream& out, float v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), 4))
    throw Error(path + ": truncated checkpoint");
  return v;
}

float get_f32(std::istream& in, const std::string& path) {
  float v;
  if (!in.read(reinterpret_cast<char*>(&v), 4))
    throw Error(path + ": truncated checkpoint");
  return v;
}

std::vector<uint32_t> width_table(const NetworkConfig& cfg) {
  std::vector<uint32_t> w;
  for (int v : cfg.branch_widths) w.push_back(uint32_t(v));
  for (int v : cfg.merge_widths) w.push_back(uint32_t(v));
  w.push_back(uint32_t(cfg.res_layers));
  w.push_back(uint32_t(cfg.gnfa_width));
  for (int v : cfg.stf_widths) w.push_back(uint32_t(v));
  return w;
}

NetworkConfig config_from_table(const std::vector<uint32_t>& w,
                                const std::string& path) {
  NetworkConfig cfg;
  if (w.size() != 10) throw Error(path + ": unexpected width-table length");
  for (int i = 0; i < 3; ++i) cfg.branch_widths[std::size_t(i)] = int(w[std::size_t(i)]);
  cfg.merge_widths[0] = int(w[3]);
  cfg.merge_widths[1] = int(w[4]);
  cfg.res_layers = int(w[5]);
  cfg.gnfa_width = int(w[6]);
  for (int i = 0; i < 3; ++i) cfg.stf_widths[std::size_t(i)] = int(w[std::size_t(7 + i)]);
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, ModelParams<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open file for writing");
  out.write("STQE", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, uint32_t(params.component));
  put_u32(out, uint32_t(params.cfg.k));
  put_f32(out, float(params.cfg.sigma2));
  put_f32(out, float(params.cfg.leaky_slope));
  const uint32_t flags = (params.cfg.squared_kernel ? 1u : 0u) |
                         (params.cfg.shared_branch ? 2u : 0u);
  put_u32(out, flags);

  const auto widths = width_table(params.cfg);
  put_u32(out, uint32_t(widths.size()));
  for (uint32_t w : widths) put_u32(out, w);

  uint32_t count = 0;
  params.for_each([&](const std::string&, Tensor<float>&) { ++count; });
  put_u32(out, count);
  params.for_each([&](const std::string& name, Tensor<float>& t) {
    put_u32(out, uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    put_u32(out, uint32_t(t.shape.rank));
    for (int i = 0; i < t.shape.rank; ++i)
      put_u32(out, uint32_t(t.shape.d[std::size_t(i)]));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              std::streamsize(t.data.size() * sizeof(float)));
  });
  out.flush();
  if (!out) throw Error(path + ": I/O failure while writing checkpoint");
}

ModelParams<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open file");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "STQE", 4) != 0)
    throw Error(path + ": not a checkpoint file (bad magic)");
  const uint32_t version = get_u32(in, path);
  if (version != kCheckpointVersion)
    throw Error(path + ": unsupported checkpoint version " + std::to_string(version));

  const uint32_t component = get_u32(in, path);
  if (component > 2) throw Error(path + ": bad component id");
  const uint32_t k = get_u32(in, path);
  const float sigma2 = get_f32(in, path);
  const float slope = get_f32(in, path);
  const uint32_t flags = get_u32(in, path);

  const uint32_t nw = get_u32(in, path);
  std::vector<uint32_t> widths(nw);
  for (auto& w : widths) w = get_u32(in, path);
  NetworkConfig cfg = config_from_table(widths, path);
  cfg.k = int(k);
  cfg.sigma2 = double(sigma2);
  cfg.leaky_slope = double(slope);
  cfg.squared_kernel = (flags & 1u) != 0;
  cfg.shared_branch = (flags & 2u) != 0;

  ModelParams<float> params = init_params<float>(0, cfg, Component(component));

  const uint32_t count = get_u32(in, path);
  uint32_t expected = 0;
  params.for_each([&](const std::string&, Tensor<float>&) { ++expected; });
  if (count != expected)
    throw Error(path + ": tensor count does not match the width table");

  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t len = get_u32(in, path);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw Error(path + ": truncated checkpoint");
    const uint32_t rank = get_u32(in, path);
    if (rank < 1 || rank > 3) throw Error(path + ": bad tensor rank");
    Shape shape;
    shape.rank = int(rank);
    for (uint32_t i = 0; i < rank; ++i)
      shape.d[i] = int64_t(get_u32(in, path));
    Tensor<float> tensor(shape);
    if (!in.read(reinterpret_cast<char*>(tensor.data.data()),
                 std::streamsize(tensor.data.size() * sizeof(float))))
      throw Error(path + ": truncated checkpoint");
    bool placed = false;
    params.for_each([&](const std::string& nm, Tensor<float>& dst) {
      if (nm != name) return;
      if (!(dst.shape == tensor.shape))
        throw Error(path + ": tensor '" + name + "' has shape " +
                    tensor.shape.str() + ", expected " + dst.shape.str());
      dst = tensor;
      placed = true;
    });
    if (!placed) throw Error(path + ": unknown tensor '" + name + "'");
  }
  return params;
}

void describe_checkpoint(const std::string& path, std::ostream& out) {
  ModelParams<float> params = load_checkpoint(path);
  out << "checkpoint: " << path << "\n"
      << "format version: " << kCheckpointVersion << "\n"
      << "component: " << component_name(params.component) << "\n"
      << "k: " << params.cfg.k << "\n"
      << "sigma2: " << params.cfg.sigma2 << "\n"
      << "leaky_slope: " << params.cfg.leaky_slope << "\n"
      << "squared_kernel: " << (params.cfg.squared_kernel ? "yes" : "no") << "\n"
      << "shared_branch: " << (params.cfg.shared_branch ? "yes" : "no") << "\n";
  out << "tensors:\n";
  int64_t total = 0;
  params.for_each([&](const std::string& name, Tensor<float>& t) {
    out << "  " << name << " " << t.shape.str() << " (" << t.numel() << ")\n";
    total += t.numel();
  });
  out << "total parameters: " << total << "\n";
}

}  // namespace stqe
