#pragma once

#include <cmath>
#include <vector>

#include "stqe/kernels.hpp"
#include "stqe/tensor.hpp"

namespace stqe {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers for a flat list of parameter tensors.
template <class T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  int64_t step = 0;

  void ensure(const std::vector<Tensor<T>*>& params) {
    if (!m.empty()) return;
    for (const Tensor<T>* p : params) {
      m.push_back(Tensor<T>::zeros(p->shape));
      v.push_back(Tensor<T>::zeros(p->shape));
    }
  }
};

// One bias-corrected update over aligned (param, grad) lists.
template <class T>
void adam_step(const std::vector<Tensor<T>*>& params,
               const std::vector<const Tensor<T>*>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw Error("adam_step: parameter/gradient count mismatch");
  state.ensure(params);
  if (state.m.size() != params.size())
    throw Error("adam_step: state does not match parameter list");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = *grads[i];
    if (!(g.shape == p.shape))
      throw Error("adam_step: gradient shape mismatch for parameter " +
                  std::to_string(i));
    kernels::adam_update(p.ptr(), g.ptr(), state.m[i].ptr(), state.v[i].ptr(),
                         p.data.size(), T(cfg.learning_rate), T(cfg.beta1),
                         T(cfg.beta2), T(cfg.epsilon), T(1.0 / bc1),
                         T(1.0 / bc2));
  }
}

}  // namespace stqe
