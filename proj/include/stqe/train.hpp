#pragma once

#include <string>
#include <vector>

#include "stqe/adam.hpp"
#include "stqe/network.hpp"
#include "stqe/pipeline.hpp"

namespace stqe {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 16;
  double learning_rate = 1e-4;
  double alpha = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patch_size = 2048;
  uint64_t seed = 0;
  NetworkConfig network;

  void validate() const {
    if (epochs <= 0 || batch_size <= 0 || patch_size == 0)
      throw Error("train config: epochs, batch_size and patch_size must be positive");
    if (learning_rate <= 0.0 || epsilon <= 0.0)
      throw Error("train config: learning_rate and epsilon must be positive");
    if (alpha < 0.0) throw Error("train config: alpha must be ≥ 0");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
      throw Error("train config: betas must lie in (0,1)");
    network.validate();
  }
};

// One supervised sample: a reconstructed triplet plus the original (clean)
// current frame. The original must match cur's geometry point for point.
struct TrainSample {
  FrameTriplet triplet;
  PointCloud original;
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<double> epoch_loss;  // mean joint loss per epoch
  std::size_t patch_count = 0;
  std::size_t degenerate_patches = 0;  // pcc fell back to the constant branch
};

TrainResult train(const std::vector<TrainSample>& dataset, Component component,
                  const TrainConfig& config);

// Manifest: {"component": "Y", "samples": [{"prev": ..., "cur": ...,
// "next": ..., "original": ...}, ...]}
struct Manifest {
  Component component = Component::Y;
  struct Entry {
    std::string prev, cur, next, original;
  };
  std::vector<Entry> samples;
};

Manifest load_manifest(const std::string& path);
std::vector<TrainSample> load_samples(const Manifest& manifest);

}  // namespace stqe
