#include "stqe/train.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>

#include <json.hpp>

#include "stqe/loss.hpp"
#include "stqe/rmc.hpp"
#include "stqe/thread_pool.hpp"

namespace stqe {

namespace {

// geometry of the original frame must match cur exactly, point for point
void check_supervision(const TrainSample& sample) {
  if (sample.original.size() != sample.triplet.cur.size())
    throw Error("train: original frame point count differs from cur");
  if (sample.original.geometry != sample.triplet.cur.geometry)
    throw Error("train: original frame geometry differs from cur "
                "(reorder the original to the reconstructed order first)");
}

struct PatchGrads {
  std::vector<Tensor<float>> grads;
  double loss = 0.0;
  bool degenerate = false;
};

PatchGrads backprop_patch(ModelParams<float>& params, const PatchTask& task,
                          float alpha) {
  Tape<float> tape;
  const ModelNodes<float> nodes = ModelNodes<float>::load(tape, params);
  const StqeGraph<float> g =
      build_stqe_graph(tape, nodes, params.cfg, task.cur, task.prev, task.next,
                       task.nbrs, task.weights);
  const NodeId target = tape.leaf(
      Tensor<float>(Shape(int64_t(task.target.size()), 1),
                    std::vector<float>(task.target)));
  PatchGrads out;
  const NodeId loss =
      joint_loss(tape, g.enhanced, target, alpha, &out.degenerate);
  out.loss = double(tape.value(loss).data[0]);
  tape.backward(loss);
  out.grads.reserve(nodes.ids.size());
  for (const NodeId id : nodes.ids) out.grads.push_back(tape.grad(id));
  return out;
}

}  // namespace

TrainResult train(const std::vector<TrainSample>& dataset, Component component,
                  const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw Error("train: empty dataset");

  // Per-sample preprocessing: motion compensation, patching, neighborhoods.
  std::vector<PatchTask> tasks;
  for (const TrainSample& sample : dataset) {
    sample.triplet.validate();
    check_supervision(sample);
    const auto [vprev, vnext] = build_virtual_pair(sample.triplet);
    for (const Patch& patch :
         generate_patches(sample.triplet.cur, config.patch_size))
      tasks.push_back(make_patch_task(patch, sample.triplet.cur, vprev.cloud,
                                      vnext.cloud, &sample.original, component,
                                      config.network));
  }

  TrainResult result;
  result.patch_count = tasks.size();
  result.params = init_params<float>(config.seed, config.network, component);

  std::vector<Tensor<float>*> param_ptrs;
  result.params.for_each(
      [&](const std::string&, Tensor<float>& t) { param_ptrs.push_back(&t); });

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.beta1 = config.beta1;
  adam_cfg.beta2 = config.beta2;
  adam_cfg.epsilon = config.epsilon;
  AdamState<float> adam;

  std::vector<std::size_t> order(tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::atomic<std::size_t> degenerate{0};
  const float alpha = float(config.alpha);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // seeded Fisher-Yates, one independent stream per epoch
    Rng rng = Rng::derive(config.seed, 0x9a7c + uint64_t(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::size_t(rng.below(i))]);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += std::size_t(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + std::size_t(config.batch_size));
      const std::size_t bn = end - begin;

      std::vector<PatchGrads> batch(bn);
      parallel_for(bn, [&](std::size_t b) {
        batch[b] =
            backprop_patch(result.params, tasks[order[begin + b]], alpha);
      });

      // Ordered accumulation: grad of the batch-mean loss.
      std::vector<Tensor<float>> acc;
      acc.reserve(param_ptrs.size());
      for (const Tensor<float>* p : param_ptrs)
        acc.push_back(Tensor<float>::zeros(p->shape));
      const float inv_bn = 1.0f / float(bn);
      for (std::size_t b = 0; b < bn; ++b) {
        for (std::size_t i = 0; i < acc.size(); ++i)
          kernels::axpy(inv_bn, batch[b].grads[i].ptr(), acc[i].ptr(),
                        acc[i].data.size());
        epoch_loss += batch[b].loss;
        if (batch[b].degenerate) degenerate.fetch_add(1);
      }

      std::vector<const Tensor<float>*> grad_ptrs;
      grad_ptrs.reserve(acc.size());
      for (const Tensor<float>& g : acc) grad_ptrs.push_back(&g);
      adam_step(param_ptrs, grad_ptrs, adam, adam_cfg);
    }
    result.epoch_loss.push_back(epoch_loss / double(tasks.size()));
  }
  result.degenerate_patches = degenerate.load();
  return result;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open manifest");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": invalid JSON: " + e.what());
  }
  Manifest m;
  if (!j.contains("component"))
    throw Error(path + ": manifest is missing 'component'");
  m.component = component_from_name(j.at("component").get<std::string>());
  if (!j.contains("samples") || !j.at("samples").is_array() ||
      j.at("samples").empty())
    throw Error(path + ": manifest needs a non-empty 'samples' array");
  for (const auto& s : j.at("samples")) {
    Manifest::Entry e;
    e.prev = s.at("prev").get<std::string>();
    e.cur = s.at("cur").get<std::string>();
    e.next = s.at("next").get<std::string>();
    e.original = s.at("original").get<std::string>();
    m.samples.push_back(std::move(e));
  }
  return m;
}

std::vector<TrainSample> load_samples(const Manifest& manifest) {
  std::vector<TrainSample> samples;
  for (const auto& e : manifest.samples) {
    TrainSample s;
    s.triplet.prev = read_ply(e.prev);
    s.triplet.cur = read_ply(e.cur);
    s.triplet.next = read_ply(e.next);
    s.original = read_ply(e.original);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace stqe
