#include "stqe/pipeline.hpp"

#include <algorithm>

#include "stqe/rmc.hpp"
#include "stqe/thread_pool.hpp"

namespace stqe {

namespace {

std::vector<float> subset_channel_normalized(const PointCloud& pc,
                                             Component component,
                                             const std::vector<int32_t>& idx) {
  std::vector<float> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[i] = pc.attr(std::size_t(idx[i]), component) * (1.0f / 255.0f);
  return out;
}

}  // namespace

PatchTask make_patch_task(const Patch& patch, const PointCloud& cur,
                          const PointCloud& vprev, const PointCloud& vnext,
                          const PointCloud* original, Component component,
                          const NetworkConfig& cfg) {
  PatchTask task;
  task.indices = patch.indices;

  std::vector<int32_t> geometry(patch.indices.size() * 3);
  for (std::size_t i = 0; i < patch.indices.size(); ++i) {
    const int32_t* p = cur.point(std::size_t(patch.indices[i]));
    std::copy(p, p + 3, geometry.begin() + std::ptrdiff_t(3 * i));
  }
  const std::size_t k =
      std::min<std::size_t>(std::size_t(cfg.k), patch.indices.size());
  task.nbrs = self_knn(geometry, k);
  task.weights =
      gaussian_weights<float>(task.nbrs, cfg.sigma2, cfg.squared_kernel);

  task.cur = subset_channel_normalized(cur, component, patch.indices);
  task.prev = subset_channel_normalized(vprev, component, patch.indices);
  task.next = subset_channel_normalized(vnext, component, patch.indices);
  if (original)
    task.target = subset_channel_normalized(*original, component, patch.indices);
  return task;
}

std::vector<float> run_patch_forward(ModelParams<float>& params,
                                     const PatchTask& task) {
  Tape<float> tape(/*recording=*/false);
  const ModelNodes<float> nodes = ModelNodes<float>::load(tape, params);
  const StqeGraph<float> g =
      build_stqe_graph(tape, nodes, params.cfg, task.cur, task.prev, task.next,
                       task.nbrs, task.weights);
  return tape.value(g.residual).data;
}

EnhancedFrame enhance_triplet(const FrameTriplet& triplet, Component component,
                              ModelParams<float>& params,
                              std::size_t patch_size, RunMode mode) {
  triplet.validate();
  const auto [vprev, vnext] = build_virtual_pair(triplet);
  const std::vector<Patch> patches = generate_patches(triplet.cur, patch_size);

  // Patches overlap; the per-point mean of (cur + r) equals cur plus the
  // mean residual, so residuals are fused and added to the untouched
  // channel. A zero-residual model is then an exact no-op on the bytes.
  std::vector<std::vector<float>> residuals(patches.size());
  parallel_for(patches.size(), [&](std::size_t p) {
    const PatchTask task = make_patch_task(patches[p], triplet.cur, vprev.cloud,
                                           vnext.cloud, nullptr, component,
                                           params.cfg);
    std::vector<float> r = run_patch_forward(params, task);
    for (float& v : r) v *= 255.0f;
    residuals[p] = std::move(r);
  });

  const std::vector<float> fused =
      fuse_patches(patches, residuals, triplet.cur.size());

  EnhancedFrame out;
  out.cloud = triplet.cur;
  out.residual = fused;
  std::vector<float> channel = triplet.cur.channel(component);
  for (std::size_t i = 0; i < fused.size(); ++i) {
    float v = channel[i] + fused[i];
    if (mode == RunMode::infer) v = std::min(255.0f, std::max(0.0f, v));
    channel[i] = v;
  }
  out.cloud.set_channel(component, channel);
  return out;
}

std::size_t mirror_index(std::ptrdiff_t i, std::size_t count) {
  if (count == 1) return 0;
  const std::ptrdiff_t last = std::ptrdiff_t(count) - 1;
  if (i < 0) i = -i;
  if (i > last) i = 2 * last - i;
  if (i < 0) i = 0;  // tiny sequences
  return std::size_t(i);
}

std::vector<EnhancedFrame> enhance_sequence(const std::vector<PointCloud>& frames,
                                            Component component,
                                            ModelParams<float>& params,
                                            std::size_t patch_size) {
  if (frames.empty()) throw Error("enhance_sequence: no frames");
  std::vector<EnhancedFrame> out(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    FrameTriplet triplet;
    triplet.prev = frames[mirror_index(std::ptrdiff_t(t) - 1, frames.size())];
    triplet.cur = frames[t];
    triplet.next = frames[mirror_index(std::ptrdiff_t(t) + 1, frames.size())];
    out[t] = enhance_triplet(triplet, component, params, patch_size);
  }
  return out;
}

}  // namespace stqe
