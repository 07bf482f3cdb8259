#pragma once

#include <vector>

#include "stqe/tape.hpp"

namespace stqe {

// (1/n) * sum (pred - target)^2, built from tape ops so gradients flow.
template <class T>
NodeId mse_loss(Tape<T>& tape, NodeId pred, NodeId target) {
  const NodeId d = tape.sub(pred, target);
  return tape.reduce_mean(tape.mul(d, d));
}

// 1 - Cov(pred,target) / sqrt(Var(pred)*Var(target)) with population (1/n)
// moments. When Var(pred)*Var(target) < 1e-12 the loss is the constant 1
// (no gradient); *degenerate is set when provided.
template <class T>
NodeId pcc_loss(Tape<T>& tape, NodeId pred, NodeId target,
                bool* degenerate = nullptr) {
  const Tensor<T>& pv = tape.value(pred);
  const Tensor<T>& tv = tape.value(target);
  if (!(pv.shape == tv.shape)) throw Error("pcc_loss: shape mismatch");
  const std::size_t n = pv.data.size();
  if (n < 2) throw Error("pcc_loss: needs at least 2 samples");

  // forward-value variance probe for the degenerate branch
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += double(pv.data[i]);
    mt += double(tv.data[i]);
  }
  mp /= double(n);
  mt /= double(n);
  double vp = 0.0, vt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    vp += (double(pv.data[i]) - mp) * (double(pv.data[i]) - mp);
    vt += (double(tv.data[i]) - mt) * (double(tv.data[i]) - mt);
  }
  vp /= double(n);
  vt /= double(n);
  if (degenerate) *degenerate = false;
  if (vp * vt < 1e-12) {
    if (degenerate) *degenerate = true;
    return tape.leaf(Tensor<T>(Shape(1), {T(1)}));
  }

  const NodeId dp = tape.sub_scalar(pred, tape.reduce_mean(pred));
  const NodeId dt = tape.sub_scalar(target, tape.reduce_mean(target));
  const NodeId cov = tape.reduce_mean(tape.mul(dp, dt));
  const NodeId var_p = tape.reduce_mean(tape.mul(dp, dp));
  const NodeId var_t = tape.reduce_mean(tape.mul(dt, dt));
  const NodeId r = tape.div(cov, tape.sqrt_op(tape.mul(var_p, var_t)));
  return tape.affine(r, T(-1), T(1));
}

// mse + alpha * pcc
template <class T>
NodeId joint_loss(Tape<T>& tape, NodeId pred, NodeId target, T alpha,
                  bool* degenerate = nullptr) {
  const NodeId mse = mse_loss(tape, pred, target);
  if (alpha == T(0)) return mse;
  const NodeId pcc = pcc_loss(tape, pred, target, degenerate);
  return tape.add(mse, tape.affine(pcc, alpha, T(0)));
}

}  // namespace stqe
