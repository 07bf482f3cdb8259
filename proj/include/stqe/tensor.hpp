#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "stqe/common.hpp"

namespace stqe {

// Dense shapes of rank 1..3; the network uses n×c and n×k×c layouts and
// rank-1 scalars/vectors. No broadcasting: every op states its shapes.
struct Shape {
  int rank = 1;
  std::array<int64_t, 3> d{1, 1, 1};

  Shape() = default;
  explicit Shape(int64_t a) : rank(1), d{a, 1, 1} {}
  Shape(int64_t a, int64_t b) : rank(2), d{a, b, 1} {}
  Shape(int64_t a, int64_t b, int64_t c) : rank(3), d{a, b, c} {}

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank; ++i) n *= d[std::size_t(i)];
    return n;
  }
  // all leading extents collapsed; channels() is the trailing extent
  int64_t rows() const { return numel() / channels(); }
  int64_t channels() const { return d[std::size_t(rank - 1)]; }

  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
      if (d[std::size_t(i)] != o.d[std::size_t(i)]) return false;
    return true;
  }

  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank; ++i) {
      if (i) s += ",";
      s += std::to_string(d[std::size_t(i)]);
    }
    return s + "]";
  }
};

template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(std::size_t(s.numel()), T(0)) {}
  Tensor(Shape s, std::vector<T> values) : shape(s), data(std::move(values)) {
    if (int64_t(data.size()) != shape.numel())
      throw Error("tensor data length does not match shape " + shape.str());
  }

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, T v) {
    Tensor t(s);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  int64_t numel() const { return shape.numel(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }
};

}  // namespace stqe
