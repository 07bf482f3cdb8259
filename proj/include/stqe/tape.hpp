#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <utility>
#include <vector>

#include "stqe/kernels.hpp"
#include "stqe/spatial_index.hpp"
#include "stqe/tensor.hpp"

namespace stqe {

using NodeId = int32_t;

// Reverse-mode differentiation tape over a closed operator set. Node values
// are appended in execution order (which is a topological order by
// construction); backward() replays the records in reverse. All inner loops
// go through stqe::kernels, so forward results are identical across SIMD
// backends and bitwise deterministic in serial mode.
template <class T>
class Tape {
public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  std::size_t node_count() const { return values_.size(); }

  NodeId leaf(Tensor<T> v) { return push(std::move(v)); }

  const Tensor<T>& value(NodeId id) const { return values_[std::size_t(id)]; }

  // Gradient of the last backward() loss w.r.t. node id; zero for nodes the
  // loss does not depend on.
  const Tensor<T>& grad(NodeId id) {
    return grad_buffer(id);
  }

  // ------------------------------------------------------------- ops -----

  // x: [..., cin], w: [cin, cout], b: [cout] -> [..., cout]
  NodeId linear(NodeId x, NodeId w, NodeId b) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    if (wv.shape.rank != 2) throw Error("linear: weight must be rank 2");
    const int64_t cin = wv.shape.d[0], cout = wv.shape.d[1];
    if (xv.shape.channels() != cin)
      throw Error("linear: input channels " + xv.shape.str() +
                  " do not match weight " + wv.shape.str());
    if (bv.numel() != cout) throw Error("linear: bias length mismatch");
    Shape os = xv.shape;
    os.d[std::size_t(os.rank - 1)] = cout;
    Tensor<T> out(os);
    const std::size_t rows = std::size_t(xv.shape.rows());
    kernels::linear_forward(xv.ptr(), wv.ptr(), bv.ptr(), out.ptr(), rows,
                            std::size_t(cin), std::size_t(cout));
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      const Tensor<T>& gy = t.grad_buffer(y);
      const Tensor<T>& xval = t.value(x);
      const Tensor<T>& wval = t.value(w);
      kernels::linear_backward_input(gy.ptr(), wval.ptr(),
                                     t.grad_buffer(x).ptr(), rows,
                                     std::size_t(cin), std::size_t(cout));
      kernels::linear_backward_params(xval.ptr(), gy.ptr(),
                                      t.grad_buffer(w).ptr(),
                                      t.grad_buffer(b).ptr(), rows,
                                      std::size_t(cin), std::size_t(cout));
    });
    return y;
  }

  NodeId leaky_relu(NodeId x, T slope) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape);
    const std::size_t n = xv.data.size();
    kernels::leaky_relu_forward(xv.ptr(), out.ptr(), n, slope);
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      kernels::leaky_relu_backward(t.value(x).ptr(), t.grad_buffer(y).ptr(),
                                   t.grad_buffer(x).ptr(), n, slope);
    });
    return y;
  }

  NodeId sigmoid(NodeId x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape);
    const std::size_t n = xv.data.size();
    kernels::sigmoid_forward(xv.ptr(), out.ptr(), n);
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      kernels::sigmoid_backward(t.value(y).ptr(), t.grad_buffer(y).ptr(),
                                t.grad_buffer(x).ptr(), n);
    });
    return y;
  }

  // x: [n, c] -> [n, k, c] with out[i][j] = x[indices[i][j]]
  NodeId gather(NodeId x, const NeighborIndex& nbrs) {
    const Tensor<T>& xv = value(x);
    if (xv.shape.rank != 2) throw Error("gather: input must be n×c");
    const int64_t n = xv.shape.d[0], c = xv.shape.d[1];
    if (std::size_t(n) != nbrs.n)
      throw Error("gather: neighbor index row count mismatch");
    for (int32_t idx : nbrs.indices)
      if (idx < 0 || int64_t(idx) >= n) throw Error("gather: index out of range");
    Tensor<T> out(Shape(n, int64_t(nbrs.k), c));
    kernels::gather_rows(xv.ptr(), nbrs.indices.data(), out.ptr(),
                         nbrs.n * nbrs.k, std::size_t(c));
    const NodeId y = push(std::move(out));
    if (recording_) {
      std::vector<int32_t> idx = nbrs.indices;  // owned by the closure
      const std::size_t nq = nbrs.n * nbrs.k;
      record([=, idx = std::move(idx)](Tape& t) {
        kernels::scatter_add_rows(t.grad_buffer(y).ptr(), idx.data(),
                                  t.grad_buffer(x).ptr(), nq, std::size_t(c));
      });
    }
    return y;
  }

  // x: [n, c] -> [n, k, c] with out[i][j] = x[i]
  NodeId duplicate(NodeId x, int64_t k) {
    const Tensor<T>& xv = value(x);
    if (xv.shape.rank != 2) throw Error("duplicate: input must be n×c");
    if (k < 1) throw Error("duplicate: k must be positive");
    const int64_t n = xv.shape.d[0], c = xv.shape.d[1];
    Tensor<T> out(Shape(n, k, c));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < k; ++j)
        std::memcpy(out.ptr() + (i * k + j) * c, xv.ptr() + i * c,
                    std::size_t(c) * sizeof(T));
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      const Tensor<T>& gy = t.grad_buffer(y);
      Tensor<T>& gx = t.grad_buffer(x);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < k; ++j)
          kernels::axpy(T(1), gy.ptr() + (i * k + j) * c, gx.ptr() + i * c,
                        std::size_t(c));
    });
    return y;
  }

  // concatenation along the trailing (channel) axis
  NodeId concat(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw Error("concat: needs at least one input");
    const Shape s0 = value(xs[0]).shape;
    int64_t ctotal = 0;
    for (NodeId id : xs) {
      const Shape& s = value(id).shape;
      if (s.rank != s0.rank || s.rows() != s0.rows())
        throw Error("concat: leading dimensions differ");
      ctotal += s.channels();
    }
    Shape os = s0;
    os.d[std::size_t(os.rank - 1)] = ctotal;
    Tensor<T> out(os);
    const int64_t rows = s0.rows();
    {
      int64_t off = 0;
      for (NodeId id : xs) {
        const Tensor<T>& v = value(id);
        const int64_t c = v.shape.channels();
        for (int64_t r = 0; r < rows; ++r)
          std::memcpy(out.ptr() + r * ctotal + off, v.ptr() + r * c,
                      std::size_t(c) * sizeof(T));
        off += c;
      }
    }
    const NodeId y = push(std::move(out));
    if (recording_) {
      std::vector<NodeId> parts = xs;
      record([=, parts = std::move(parts)](Tape& t) {
        const Tensor<T>& gy = t.grad_buffer(y);
        int64_t off = 0;
        for (NodeId id : parts) {
          Tensor<T>& gx = t.grad_buffer(id);
          const int64_t c = t.value(id).shape.channels();
          for (int64_t r = 0; r < rows; ++r)
            kernels::axpy(T(1), gy.ptr() + r * ctotal + off, gx.ptr() + r * c,
                          std::size_t(c));
          off += c;
        }
      });
    }
    return y;
  }

  // channel slice [begin, end) of a rank-2 tensor
  NodeId slice_channels(NodeId x, int64_t begin, int64_t end) {
    const Tensor<T>& xv = value(x);
    const int64_t c = xv.shape.channels();
    if (begin < 0 || end > c || begin >= end)
      throw Error("slice_channels: bad range");
    const int64_t rows = xv.shape.rows();
    const int64_t cs = end - begin;
    Shape os = xv.shape;
    os.d[std::size_t(os.rank - 1)] = cs;
    Tensor<T> out(os);
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(out.ptr() + r * cs, xv.ptr() + r * c + begin,
                  std::size_t(cs) * sizeof(T));
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      const Tensor<T>& gy = t.grad_buffer(y);
      Tensor<T>& gx = t.grad_buffer(x);
      for (int64_t r = 0; r < rows; ++r)
        kernels::axpy(T(1), gy.ptr() + r * cs, gx.ptr() + r * c + begin,
                      std::size_t(cs));
    });
    return y;
  }

  // x: [n, k, c] -> [n, c], gradient routed to the first maximal j
  NodeId max_pool(NodeId x) {
    const Tensor<T>& xv = value(x);
    if (xv.shape.rank != 3) throw Error("max_pool: input must be n×k×c");
    const int64_t n = xv.shape.d[0], k = xv.shape.d[1], c = xv.shape.d[2];
    Tensor<T> out(Shape(n, c));
    std::vector<int32_t> argmax(std::size_t(n * c));
    kernels::max_pool_forward(xv.ptr(), out.ptr(), argmax.data(),
                              std::size_t(n), std::size_t(k), std::size_t(c));
    const NodeId y = push(std::move(out));
    if (recording_) {
      record([=, argmax = std::move(argmax)](Tape& t) {
        kernels::max_pool_backward(t.grad_buffer(y).ptr(), argmax.data(),
                                   t.grad_buffer(x).ptr(), std::size_t(n),
                                   std::size_t(k), std::size_t(c));
      });
    }
    return y;
  }

  NodeId add(NodeId a, NodeId b) {
    return binary(a, b, "add",
                  [](const T* pa, const T* pb, T* py, std::size_t n) {
                    kernels::add(pa, pb, py, n);
                  },
                  [](Tape& t, NodeId ga, NodeId gb, NodeId gy, std::size_t n) {
                    kernels::axpy(T(1), t.grad_buffer(gy).ptr(),
                                  t.grad_buffer(ga).ptr(), n);
                    kernels::axpy(T(1), t.grad_buffer(gy).ptr(),
                                  t.grad_buffer(gb).ptr(), n);
                  });
  }

  NodeId sub(NodeId a, NodeId b) {
    return binary(a, b, "sub",
                  [](const T* pa, const T* pb, T* py, std::size_t n) {
                    kernels::sub(pa, pb, py, n);
                  },
                  [](Tape& t, NodeId ga, NodeId gb, NodeId gy, std::size_t n) {
                    kernels::axpy(T(1), t.grad_buffer(gy).ptr(),
                                  t.grad_buffer(ga).ptr(), n);
                    kernels::axpy(T(-1), t.grad_buffer(gy).ptr(),
                                  t.grad_buffer(gb).ptr(), n);
                  });
  }

  NodeId mul(NodeId a, NodeId b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (!(av.shape == bv.shape)) throw Error("mul: shape mismatch");
    Tensor<T> out(av.shape);
    const std::size_t n = av.data.size();
    kernels::mul(av.ptr(), bv.ptr(), out.ptr(), n);
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      const Tensor<T>& gy = t.grad_buffer(y);
      kernels::mul_acc(gy.ptr(), t.value(b).ptr(), t.grad_buffer(a).ptr(), n);
      kernels::mul_acc(gy.ptr(), t.value(a).ptr(), t.grad_buffer(b).ptr(), n);
    });
    return y;
  }

  // x: [n, k, c] scaled per (n, k) row by constant weights w: [n, k].
  // No gradient flows into the weights.
  NodeId mul_neighbor_weights(NodeId x, const Tensor<T>& w) {
    const Shape xs = value(x).shape;  // push below may relocate node storage
    if (xs.rank != 3) throw Error("mul_neighbor_weights: input must be n×k×c");
    if (w.shape.rank != 2 || w.shape.d[0] != xs.d[0] || w.shape.d[1] != xs.d[1])
      throw Error("mul_neighbor_weights: weight shape mismatch");
    const std::size_t rows = std::size_t(xs.d[0] * xs.d[1]);
    const std::size_t c = std::size_t(xs.d[2]);
    const NodeId wid = push(Tensor<T>(w));  // keep weights alive on the tape
    Tensor<T> out(xs);
    kernels::mul_rowscalar(value(x).ptr(), value(wid).ptr(), out.ptr(), rows, c);
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      kernels::mul_rowscalar_acc(t.grad_buffer(y).ptr(), t.value(wid).ptr(),
                                 t.grad_buffer(x).ptr(), rows, c);
    });
    return y;
  }

  // y = a*x + b with scalar constants
  NodeId affine(NodeId x, T a, T b) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape);
    const std::size_t n = xv.data.size();
    for (std::size_t i = 0; i < n; ++i) out.data[i] = a * xv.data[i] + b;
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      kernels::axpy(a, t.grad_buffer(y).ptr(), t.grad_buffer(x).ptr(), n);
    });
    return y;
  }

  NodeId sqrt_op(NodeId x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape);
    for (std::size_t i = 0; i < xv.data.size(); ++i)
      out.data[i] = std::sqrt(xv.data[i]);
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      const Tensor<T>& yv = t.value(y);
      const Tensor<T>& gy = t.grad_buffer(y);
      Tensor<T>& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < yv.data.size(); ++i)
        gx.data[i] += gy.data[i] * T(0.5) / yv.data[i];
    });
    return y;
  }

  NodeId div(NodeId a, NodeId b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (!(av.shape == bv.shape)) throw Error("div: shape mismatch");
    Tensor<T> out(av.shape);
    for (std::size_t i = 0; i < av.data.size(); ++i)
      out.data[i] = av.data[i] / bv.data[i];
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      const Tensor<T>& yv = t.value(y);
      const Tensor<T>& bval = t.value(b);
      const Tensor<T>& gy = t.grad_buffer(y);
      Tensor<T>& ga = t.grad_buffer(a);
      Tensor<T>& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < yv.data.size(); ++i) {
        ga.data[i] += gy.data[i] / bval.data[i];
        gb.data[i] -= gy.data[i] * yv.data[i] / bval.data[i];
      }
    });
    return y;
  }

  // y[i] = x[i] - s where s is a scalar node (the only broadcast in the set,
  // needed for centered moments)
  NodeId sub_scalar(NodeId x, NodeId s) {
    const Tensor<T>& xv = value(x);
    if (value(s).numel() != 1) throw Error("sub_scalar: s must be scalar");
    Tensor<T> out(xv.shape);
    const T sv = value(s).data[0];
    const std::size_t n = xv.data.size();
    for (std::size_t i = 0; i < n; ++i) out.data[i] = xv.data[i] - sv;
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      const Tensor<T>& gy = t.grad_buffer(y);
      kernels::axpy(T(1), gy.ptr(), t.grad_buffer(x).ptr(), n);
      t.grad_buffer(s).data[0] -= kernels::sum(gy.ptr(), n);
    });
    return y;
  }

  NodeId reduce_mean(NodeId x) {
    const Tensor<T>& xv = value(x);
    const std::size_t n = xv.data.size();
    Tensor<T> out(Shape(1));
    out.data[0] = kernels::sum(xv.ptr(), n) / T(n);
    const NodeId y = push(std::move(out));
    record([=](Tape& t) {
      const T g = t.grad_buffer(y).data[0] / T(n);
      Tensor<T>& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < n; ++i) gx.data[i] += g;
    });
    return y;
  }

  // ------------------------------------------------------- backward ------

  void backward(NodeId loss) {
    if (!recording_) throw Error("backward: tape is not recording");
    if (backward_done_)
      throw Error("backward: already called on this tape (reset first)");
    if (value(loss).numel() != 1) throw Error("backward: loss must be a scalar");
    backward_done_ = true;
    grads_.assign(values_.size(), Tensor<T>());
    grad_buffer(loss).data[0] = T(1);
    for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) (*it)(*this);
  }

  void reset() {
    grads_.clear();
    backward_done_ = false;
  }

private:
  NodeId push(Tensor<T> v) {
    values_.push_back(std::move(v));
    return NodeId(values_.size() - 1);
  }

  void record(std::function<void(Tape&)> fn) {
    if (recording_) recs_.push_back(std::move(fn));
  }

  Tensor<T>& grad_buffer(NodeId id) {
    if (grads_.size() != values_.size()) grads_.resize(values_.size());
    Tensor<T>& g = grads_[std::size_t(id)];
    if (g.data.empty() && values_[std::size_t(id)].numel() > 0)
      g = Tensor<T>::zeros(values_[std::size_t(id)].shape);
    return g;
  }

  template <class Fwd, class Bwd>
  NodeId binary(NodeId a, NodeId b, const char* name, Fwd fwd, Bwd bwd) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (!(av.shape == bv.shape))
      throw Error(std::string(name) + ": shape mismatch " + av.shape.str() +
                  " vs " + bv.shape.str());
    Tensor<T> out(av.shape);
    const std::size_t n = av.data.size();
    fwd(av.ptr(), bv.ptr(), out.ptr(), n);
    const NodeId y = push(std::move(out));
    record([=](Tape& t) { bwd(t, a, b, y, n); });
    return y;
  }

  std::vector<Tensor<T>> values_;
  std::vector<Tensor<T>> grads_;
  std::vector<std::function<void(Tape&)>> recs_;
  bool recording_ = true;
  bool backward_done_ = false;
};

}  // namespace stqe
