#include "stqe/network.hpp"

#include <algorithm>

namespace stqe {

namespace {

std::vector<float> normalized_channel(const PointCloud& pc, Component c) {
  std::vector<float> v = pc.channel(c);
  for (float& x : v) x *= 1.0f / 255.0f;
  return v;
}

}  // namespace

EnhancedFrame stqe_forward(const FrameTriplet& triplet, Component component,
                           ModelParams<float>& params, RunMode mode) {
  triplet.validate();
  const auto [vprev, vnext] = build_virtual_pair(triplet);

  const std::size_t n = triplet.cur.size();
  const std::size_t k = std::min<std::size_t>(std::size_t(params.cfg.k), n);
  const NeighborIndex nbrs = self_knn(triplet.cur.geometry, k);
  const Tensor<float> weights = gaussian_weights<float>(
      nbrs, params.cfg.sigma2, params.cfg.squared_kernel);

  Tape<float> tape(/*recording=*/false);
  const ModelNodes<float> nodes = ModelNodes<float>::load(tape, params);
  const StqeGraph<float> g = build_stqe_graph(
      tape, nodes, params.cfg, normalized_channel(triplet.cur, component),
      normalized_channel(vprev.cloud, component),
      normalized_channel(vnext.cloud, component), nbrs, weights);

  EnhancedFrame out;
  out.cloud = triplet.cur;
  out.residual.resize(n);
  const Tensor<float>& resid = tape.value(g.residual);
  std::vector<float> channel = triplet.cur.channel(component);
  for (std::size_t i = 0; i < n; ++i) {
    out.residual[i] = 255.0f * resid.data[i];
    float v = channel[i] + out.residual[i];
    if (mode == RunMode::infer) v = std::min(255.0f, std::max(0.0f, v));
    channel[i] = v;
  }
  out.cloud.set_channel(component, channel);
  return out;
}

}  // namespace stqe
