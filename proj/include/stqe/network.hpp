#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stqe/pcdata.hpp"
#include "stqe/rmc.hpp"
#include "stqe/spatial_index.hpp"
#include "stqe/tape.hpp"

namespace stqe {

// Channel widths and hyperparameters of the enhancement network. Defaults
// land the parameter count at 336,673.
struct NetworkConfig {
  // temporal branch: per-reference shallow convs on [neighbor ‖ center]
  std::array<int, 3> branch_widths{32, 64, 64};
  // convs merging the two reference branches; the result is split in half
  // by the attention stage, so merge_widths.back() must be even
  std::array<int, 2> merge_widths{256, 256};
  int res_layers = 4;
  // spatial branch: three densely connected aggregation blocks
  int gnfa_width = 64;
  // fusion head widths before the final projection to 1
  std::array<int, 3> stf_widths{256, 128, 64};

  int k = 20;
  double sigma2 = 0.5;
  double leaky_slope = 0.01;
  bool squared_kernel = false;   // use exp(-e^2/(2s^2)) instead of exp(-e/(2s^2))
  bool shared_branch = true;     // forward/backward branches share weights

  int cta_channels() const { return merge_widths[1] / 2; }
  int spatial_channels() const { return 3 * gnfa_width; }

  void validate() const {
    if (merge_widths[1] % 2 != 0)
      throw Error("network config: merged feature width must be even");
    for (int w : branch_widths)
      if (w <= 0) throw Error("network config: widths must be positive");
    if (gnfa_width <= 0 || k <= 0) throw Error("network config: widths must be positive");
    if (sigma2 <= 0.0) throw Error("network config: sigma2 must be positive");
  }
};

template <class T>
struct LinearParams {
  Tensor<T> weight;  // [cin, cout]
  Tensor<T> bias;    // [cout]
};

template <class T>
struct GnfaParams {
  LinearParams<T> embed;    // 2l -> l1
  LinearParams<T> refine;   // l1 -> l1
};

// All learnable weights, addressable by stable names for the checkpoint
// format and the optimizer.
template <class T>
struct ModelParams {
  NetworkConfig cfg;
  Component component = Component::Y;

  std::vector<LinearParams<T>> branch;      // shallow convs, shared by both references
  std::vector<LinearParams<T>> merge;       // 2 layers
  std::array<LinearParams<T>, 2> attention; // the shared W_2d stack
  std::vector<LinearParams<T>> res;         // res_layers convs
  std::array<GnfaParams<T>, 3> gnfa;
  std::vector<LinearParams<T>> stf;         // hidden fusion layers
  LinearParams<T> stf_out;                  // -> 1

  void for_each(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    auto lin = [&](const std::string& base, LinearParams<T>& p) {
      fn(base + ".weight", p.weight);
      fn(base + ".bias", p.bias);
    };
    for (std::size_t i = 0; i < branch.size(); ++i)
      lin("bife.branch." + std::to_string(i), branch[i]);
    for (std::size_t i = 0; i < merge.size(); ++i)
      lin("bife.merge." + std::to_string(i), merge[i]);
    lin("cta.0", attention[0]);
    lin("cta.1", attention[1]);
    for (std::size_t i = 0; i < res.size(); ++i)
      lin("res." + std::to_string(i), res[i]);
    for (std::size_t i = 0; i < 3; ++i) {
      lin("gnfa." + std::to_string(i) + ".embed", gnfa[i].embed);
      lin("gnfa." + std::to_string(i) + ".refine", gnfa[i].refine);
    }
    for (std::size_t i = 0; i < stf.size(); ++i)
      lin("stf." + std::to_string(i), stf[i]);
    lin("stf.out", stf_out);
  }

  int64_t parameter_count() const {
    int64_t total = 0;
    const_cast<ModelParams*>(this)->for_each(
        [&](const std::string&, Tensor<T>& t) { total += t.numel(); });
    return total;
  }

  template <class U>
  ModelParams<U> cast() const;
};

// Kaiming fan-in uniform weights (gain matched to the Leaky ReLU slope),
// zero biases; bit-reproducible for a fixed seed.
template <class T>
ModelParams<T> init_params(uint64_t seed, const NetworkConfig& cfg = {},
                           Component component = Component::Y);

// Eq-style kernel weights from unsquared neighbor distances:
// w = exp(-e / (2*sigma2)), or exp(-e^2 / (2*sigma2)) with squared_kernel.
// Constants in the backward pass.
template <class T>
Tensor<T> gaussian_weights(const NeighborIndex& nbrs, double sigma2,
                           bool squared = false) {
  if (sigma2 <= 0.0) throw Error("gaussian_weights: sigma2 must be positive");
  Tensor<T> w(Shape(int64_t(nbrs.n), int64_t(nbrs.k)));
  const double denom = 2.0 * sigma2;
  for (std::size_t i = 0; i < nbrs.distances.size(); ++i) {
    const double e = nbrs.distances[i];
    if (e < 0.0) throw Error("gaussian_weights: negative distance");
    w.data[i] = T(std::exp(-(squared ? e * e : e) / denom));
  }
  return w;
}

// References to the parameter leaves of one tape.
template <class T>
struct ModelNodes {
  std::vector<std::pair<std::string, NodeId>> named;
  std::vector<NodeId> ids;  // same order as ModelParams::for_each

  static ModelNodes load(Tape<T>& tape, ModelParams<T>& params) {
    ModelNodes nodes;
    params.for_each([&](const std::string& name, Tensor<T>& t) {
      const NodeId id = tape.leaf(Tensor<T>(t));
      nodes.named.emplace_back(name, id);
      nodes.ids.push_back(id);
    });
    return nodes;
  }
};

namespace detail {

template <class T>
NodeId lin_lrelu(Tape<T>& tape, NodeId x, NodeId w, NodeId b, T slope) {
  return tape.leaky_relu(tape.linear(x, w, b), slope);
}

}  // namespace detail

// Per-point linear stack indices into ModelNodes::ids, laid out in
// for_each order: every LinearParams occupies two consecutive ids.
struct ParamLayout {
  int branch0 = 0;  // 2 ids per layer
  int merge0, cta0, res0, gnfa0, stf0, out0;
  int n_branch, n_merge, n_res, n_stf;

  explicit ParamLayout(const NetworkConfig& cfg) {
    n_branch = 3;
    n_merge = 2;
    n_res = cfg.res_layers;
    n_stf = int(cfg.stf_widths.size());
    merge0 = branch0 + 2 * n_branch;
    cta0 = merge0 + 2 * n_merge;
    res0 = cta0 + 2 * 2;
    gnfa0 = res0 + 2 * n_res;
    stf0 = gnfa0 + 2 * 2 * 3;
    out0 = stf0 + 2 * n_stf;
  }
};

// One aggregation block: duplicate ‖ gather -> conv+lrelu -> kernel
// weighting -> conv+lrelu -> max pool over the neighborhood.
template <class T>
NodeId gnfa_forward(Tape<T>& tape, NodeId f_in, const NeighborIndex& nbrs,
                    const Tensor<T>& weights, NodeId w1, NodeId b1, NodeId w2,
                    NodeId b2, T slope) {
  const NodeId dup = tape.duplicate(f_in, int64_t(nbrs.k));
  const NodeId knn = tape.gather(f_in, nbrs);
  const NodeId com =
      detail::lin_lrelu(tape, tape.concat({dup, knn}), w1, b1, slope);
  const NodeId weighted = tape.mul_neighbor_weights(com, weights);
  const NodeId refined = detail::lin_lrelu(tape, weighted, w2, b2, slope);
  return tape.max_pool(refined);
}

// Channel-split attention: halves gated by a sigmoid of the shared two-layer
// stack, then summed.
template <class T>
NodeId cta_forward(Tape<T>& tape, NodeId f1, NodeId w1, NodeId b1, NodeId w2,
                   NodeId b2, T slope) {
  const int64_t c = tape.value(f1).shape.channels();
  if (c % 2 != 0) throw Error("cta_forward: channel count must be even");
  const NodeId fu = tape.slice_channels(f1, 0, c / 2);
  const NodeId fd = tape.slice_channels(f1, c / 2, c);
  auto gate = [&](NodeId f) {
    const NodeId h = detail::lin_lrelu(tape, f, w1, b1, slope);
    return tape.sigmoid(tape.linear(h, w2, b2));
  };
  return tape.add(tape.mul(fu, gate(fu)), tape.mul(fd, gate(fd)));
}

// x + L4(lrelu(L3(lrelu(L2(lrelu(L1(x)))))))
template <class T>
NodeId resblock_forward(Tape<T>& tape, NodeId x,
                        const std::vector<std::array<NodeId, 2>>& layers,
                        T slope) {
  NodeId h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = tape.linear(h, layers[i][0], layers[i][1]);
    if (i + 1 < layers.size()) h = tape.leaky_relu(h, slope);
  }
  return tape.add(x, h);
}

template <class T>
struct StqeGraph {
  NodeId cur;          // normalized current attribute leaf [n,1]
  NodeId bife_concat;  // concatenated per-reference branch features
  NodeId temporal;     // BIFE output
  NodeId spatial;      // SFE output
  NodeId residual;     // STF output [n,1], normalized units
  NodeId enhanced;     // cur + residual, normalized units
};

// Temporal branch: per reference, neighborhood gather ‖ duplicated center
// through the shared shallow stack, max-pooled over the neighborhood, then
// merge convs, channel-split attention and the residual block.
// out_concat, when given, receives the pre-merge concatenation node.
template <class T>
NodeId bife_forward(Tape<T>& tape, const NetworkConfig& cfg,
                    const std::vector<NodeId>& p, NodeId prev_attr,
                    NodeId next_attr, const NeighborIndex& nbrs,
                    NodeId* out_concat = nullptr) {
  const T slope = T(cfg.leaky_slope);
  const ParamLayout lay(cfg);
  auto branch = [&](NodeId attr) {
    NodeId h = tape.concat({tape.duplicate(attr, int64_t(nbrs.k)),
                            tape.gather(attr, nbrs)});
    for (int l = 0; l < lay.n_branch; ++l)
      h = detail::lin_lrelu(tape, h, p[std::size_t(lay.branch0 + 2 * l)],
                            p[std::size_t(lay.branch0 + 2 * l + 1)], slope);
    return tape.max_pool(h);
  };
  NodeId f1 = tape.concat({branch(prev_attr), branch(next_attr)});
  if (out_concat) *out_concat = f1;
  for (int l = 0; l < lay.n_merge; ++l)
    f1 = detail::lin_lrelu(tape, f1, p[std::size_t(lay.merge0 + 2 * l)],
                           p[std::size_t(lay.merge0 + 2 * l + 1)], slope);
  const NodeId f_cta = cta_forward(tape, f1, p[std::size_t(lay.cta0)],
                                   p[std::size_t(lay.cta0 + 1)],
                                   p[std::size_t(lay.cta0 + 2)],
                                   p[std::size_t(lay.cta0 + 3)], slope);
  std::vector<std::array<NodeId, 2>> res_layers;
  for (int l = 0; l < lay.n_res; ++l)
    res_layers.push_back({p[std::size_t(lay.res0 + 2 * l)],
                          p[std::size_t(lay.res0 + 2 * l + 1)]});
  return resblock_forward(tape, f_cta, res_layers, slope);
}

// Spatial branch: three densely connected aggregation blocks on the current
// frame, all sharing one neighborhood and one weight matrix.
template <class T>
NodeId sfe_forward(Tape<T>& tape, const NetworkConfig& cfg,
                   const std::vector<NodeId>& p, NodeId cur_attr,
                   const NeighborIndex& nbrs, const Tensor<T>& weights) {
  const T slope = T(cfg.leaky_slope);
  const ParamLayout lay(cfg);
  auto gnfa = [&](NodeId fin, int block) {
    const int base = lay.gnfa0 + 4 * block;
    return gnfa_forward(tape, fin, nbrs, weights, p[std::size_t(base)],
                        p[std::size_t(base + 1)], p[std::size_t(base + 2)],
                        p[std::size_t(base + 3)], slope);
  };
  const NodeId g1 = gnfa(cur_attr, 0);
  const NodeId g2 = gnfa(tape.concat({cur_attr, g1}), 1);
  const NodeId g3 = gnfa(tape.concat({cur_attr, g1, g2}), 2);
  return tape.concat({g1, g2, g3});
}

// Fusion head: concatenated features through the conv stack and the final
// projection to one channel.
template <class T>
NodeId stf_forward(Tape<T>& tape, const NetworkConfig& cfg,
                   const std::vector<NodeId>& p, NodeId temporal,
                   NodeId spatial) {
  const T slope = T(cfg.leaky_slope);
  const ParamLayout lay(cfg);
  NodeId h = tape.concat({temporal, spatial});
  for (int l = 0; l < lay.n_stf; ++l)
    h = detail::lin_lrelu(tape, h, p[std::size_t(lay.stf0 + 2 * l)],
                          p[std::size_t(lay.stf0 + 2 * l + 1)], slope);
  return tape.linear(h, p[std::size_t(lay.out0)], p[std::size_t(lay.out0 + 1)]);
}

// Builds the full forward graph on an existing tape. Attributes are fed in
// normalized [0,1] units; `weights` are the per-neighborhood kernel weights.
template <class T>
StqeGraph<T> build_stqe_graph(Tape<T>& tape, const ModelNodes<T>& nodes,
                              const NetworkConfig& cfg,
                              const std::vector<T>& cur_norm,
                              const std::vector<T>& prev_norm,
                              const std::vector<T>& next_norm,
                              const NeighborIndex& nbrs,
                              const Tensor<T>& weights) {
  cfg.validate();
  const int64_t n = int64_t(cur_norm.size());
  if (prev_norm.size() != cur_norm.size() || next_norm.size() != cur_norm.size())
    throw Error("stqe graph: attribute vector length mismatch");

  StqeGraph<T> g;
  g.cur = tape.leaf(Tensor<T>(Shape(n, 1), std::vector<T>(cur_norm)));
  const NodeId prev_id = tape.leaf(Tensor<T>(Shape(n, 1), std::vector<T>(prev_norm)));
  const NodeId next_id = tape.leaf(Tensor<T>(Shape(n, 1), std::vector<T>(next_norm)));

  g.temporal = bife_forward(tape, cfg, nodes.ids, prev_id, next_id, nbrs,
                            &g.bife_concat);
  g.spatial = sfe_forward(tape, cfg, nodes.ids, g.cur, nbrs, weights);
  g.residual = stf_forward(tape, cfg, nodes.ids, g.temporal, g.spatial);
  g.enhanced = tape.add(g.cur, g.residual);
  return g;
}

struct EnhancedFrame {
  PointCloud cloud;
  std::vector<float> residual;  // raw network output in attribute units
};

enum class RunMode { train, infer };

// Full pipeline on one frame triplet (no patching): motion compensation,
// neighborhood search, network forward. In infer mode the enhanced channel
// is clamped to [0,255].
EnhancedFrame stqe_forward(const FrameTriplet& triplet, Component component,
                           ModelParams<float>& params,
                           RunMode mode = RunMode::infer);

// ------------------------------------------------------------ templates ---

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.cfg = cfg;
  out.component = component;
  auto conv = [](const LinearParams<T>& p) {
    return LinearParams<U>{p.weight.template cast<U>(), p.bias.template cast<U>()};
  };
  for (const auto& l : branch) out.branch.push_back(conv(l));
  for (const auto& l : merge) out.merge.push_back(conv(l));
  out.attention = {conv(attention[0]), conv(attention[1])};
  for (const auto& l : res) out.res.push_back(conv(l));
  for (int i = 0; i < 3; ++i)
    out.gnfa[std::size_t(i)] = {conv(gnfa[std::size_t(i)].embed),
                                conv(gnfa[std::size_t(i)].refine)};
  for (const auto& l : stf) out.stf.push_back(conv(l));
  out.stf_out = conv(stf_out);
  return out;
}

template <class T>
ModelParams<T> init_params(uint64_t seed, const NetworkConfig& cfg,
                           Component component) {
  cfg.validate();
  ModelParams<T> params;
  params.cfg = cfg;
  params.component = component;

  Rng rng = Rng::derive(seed, 0x57515e);
  const double gain2 = 2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope);
  auto make_linear = [&](int cin, int cout) {
    LinearParams<T> p;
    p.weight = Tensor<T>(Shape(cin, cout));
    p.bias = Tensor<T>(Shape(cout));
    const double bound = std::sqrt(3.0 * gain2 / double(cin));
    for (auto& w : p.weight.data) w = T(rng.uniform(-bound, bound));
    return p;
  };

  int c = 2;  // [neighbor ‖ center]
  for (int w : cfg.branch_widths) {
    params.branch.push_back(make_linear(c, w));
    c = w;
  }
  int cm = 2 * c;
  for (int w : cfg.merge_widths) {
    params.merge.push_back(make_linear(cm, w));
    cm = w;
  }
  const int half = cfg.cta_channels();
  params.attention[0] = make_linear(half, half);
  params.attention[1] = make_linear(half, half);
  for (int l = 0; l < cfg.res_layers; ++l)
    params.res.push_back(make_linear(half, half));

  int lin = 1;
  for (int b = 0; b < 3; ++b) {
    params.gnfa[std::size_t(b)].embed = make_linear(2 * lin, cfg.gnfa_width);
    params.gnfa[std::size_t(b)].refine = make_linear(cfg.gnfa_width, cfg.gnfa_width);
    lin += cfg.gnfa_width;
  }

  int cs = half + cfg.spatial_channels();
  for (int w : cfg.stf_widths) {
    params.stf.push_back(make_linear(cs, w));
    cs = w;
  }
  params.stf_out = make_linear(cs, 1);
  return params;
}

}  // namespace stqe
