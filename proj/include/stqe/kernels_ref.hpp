#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "stqe/kernels.hpp"

// Scalar reference kernels. These define the numerical contract: the SIMD
// variants must reproduce them bit for bit, so the accumulation order per
// output element documented here is normative.

namespace stqe::kernels::ref {

template <class T>
void linear_forward(const T* x, const T* w, const T* b, T* y, std::size_t rows,
                    std::size_t cin, std::size_t cout) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cin;
    T* yr = y + r * cout;
    for (std::size_t j = 0; j < cout; ++j) yr[j] = b[j];
    for (std::size_t i = 0; i < cin; ++i) {
      const T xi = xr[i];
      const T* wi = w + i * cout;
      for (std::size_t j = 0; j < cout; ++j) yr[j] += xi * wi[j];
    }
  }
}

template <class T>
void linear_backward_input(const T* gy, const T* w, T* gx, std::size_t rows,
                           std::size_t cin, std::size_t cout) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* gyr = gy + r * cout;
    T* gxr = gx + r * cin;
    for (std::size_t j = 0; j < cout; ++j) {
      const T g = gyr[j];
      const T* wj = w + j;  // column j, stride cout
      for (std::size_t i = 0; i < cin; ++i) gxr[i] += g * wj[i * cout];
    }
  }
}

template <class T>
void linear_backward_params(const T* x, const T* gy, T* gw, T* gb,
                            std::size_t rows, std::size_t cin,
                            std::size_t cout) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cin;
    const T* gyr = gy + r * cout;
    for (std::size_t i = 0; i < cin; ++i) {
      const T xi = xr[i];
      T* gwi = gw + i * cout;
      for (std::size_t j = 0; j < cout; ++j) gwi[j] += xi * gyr[j];
    }
    for (std::size_t j = 0; j < cout; ++j) gb[j] += gyr[j];
  }
}

template <class T>
void leaky_relu_forward(const T* x, T* y, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= T(0) ? x[i] : slope * x[i];
}

template <class T>
void leaky_relu_backward(const T* x, const T* gy, T* gx, std::size_t n,
                         T slope) {
  for (std::size_t i = 0; i < n; ++i)
    gx[i] += x[i] >= T(0) ? gy[i] : slope * gy[i];
}

template <class T>
void sigmoid_forward(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
}

template <class T>
void sigmoid_backward(const T* y, const T* gy, T* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
}

template <class T>
void add(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
void sub(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <class T>
void mul(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void mul_acc(const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale(const T* x, T alpha, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <class T>
void clamp(const T* x, T lo, T hi, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T v = x[i];
    if (v < lo) v = lo;
    if (v > hi) v = hi;
    y[i] = v;
  }
}

template <class T>
void mul_rowscalar(const T* x, const T* w, T* y, std::size_t rows,
                   std::size_t c) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T wr = w[r];
    const T* xr = x + r * c;
    T* yr = y + r * c;
    for (std::size_t q = 0; q < c; ++q) yr[q] = xr[q] * wr;
  }
}

template <class T>
void mul_rowscalar_acc(const T* x, const T* w, T* y, std::size_t rows,
                       std::size_t c) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T wr = w[r];
    const T* xr = x + r * c;
    T* yr = y + r * c;
    for (std::size_t q = 0; q < c; ++q) yr[q] += xr[q] * wr;
  }
}

template <class T>
void max_pool_forward(const T* x, T* y, int32_t* argmax, std::size_t rows,
                      std::size_t k, std::size_t c) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * k * c;
    T* yr = y + r * c;
    int32_t* ar = argmax + r * c;
    for (std::size_t q = 0; q < c; ++q) {
      yr[q] = xr[q];
      ar[q] = 0;
    }
    for (std::size_t j = 1; j < k; ++j) {
      const T* xj = xr + j * c;
      for (std::size_t q = 0; q < c; ++q) {
        if (xj[q] > yr[q]) {  // strict: ties keep the first occurrence
          yr[q] = xj[q];
          ar[q] = int32_t(j);
        }
      }
    }
  }
}

template <class T>
void max_pool_backward(const T* gy, const int32_t* argmax, T* gx,
                       std::size_t rows, std::size_t k, std::size_t c) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* gyr = gy + r * c;
    const int32_t* ar = argmax + r * c;
    T* gxr = gx + r * k * c;
    for (std::size_t q = 0; q < c; ++q) gxr[std::size_t(ar[q]) * c + q] += gyr[q];
  }
}

template <class T>
void gather_rows(const T* x, const int32_t* idx, T* y, std::size_t nq,
                 std::size_t c) {
  for (std::size_t q = 0; q < nq; ++q)
    std::memcpy(y + q * c, x + std::size_t(idx[q]) * c, c * sizeof(T));
}

template <class T>
void scatter_add_rows(const T* gy, const int32_t* idx, T* gx, std::size_t nq,
                      std::size_t c) {
  for (std::size_t q = 0; q < nq; ++q) {
    const T* src = gy + q * c;
    T* dst = gx + std::size_t(idx[q]) * c;
    for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
  }
}

template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1,
                 T beta2, T eps, T inv_bc1, T inv_bc2) {
  const T om1 = T(1) - beta1;
  const T om2 = T(1) - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const T gi = g[i];
    m[i] = beta1 * m[i] + om1 * gi;
    v[i] = beta2 * v[i] + om2 * (gi * gi);
    const T mhat = m[i] * inv_bc1;
    const T vhat = v[i] * inv_bc2;
    p[i] -= (lr * mhat) / (std::sqrt(vhat) + eps);
  }
}

template <class T>
T sum(const T* x, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
KernelTable<T> make_table() {
  KernelTable<T> t;
  t.linear_forward = &linear_forward<T>;
  t.linear_backward_input = &linear_backward_input<T>;
  t.linear_backward_params = &linear_backward_params<T>;
  t.leaky_relu_forward = &leaky_relu_forward<T>;
  t.leaky_relu_backward = &leaky_relu_backward<T>;
  t.sigmoid_forward = &sigmoid_forward<T>;
  t.sigmoid_backward = &sigmoid_backward<T>;
  t.add = &add<T>;
  t.sub = &sub<T>;
  t.mul = &mul<T>;
  t.mul_acc = &mul_acc<T>;
  t.axpy = &axpy<T>;
  t.scale = &scale<T>;
  t.clamp = &clamp<T>;
  t.mul_rowscalar = &mul_rowscalar<T>;
  t.mul_rowscalar_acc = &mul_rowscalar_acc<T>;
  t.max_pool_forward = &max_pool_forward<T>;
  t.max_pool_backward = &max_pool_backward<T>;
  t.gather_rows = &gather_rows<T>;
  t.scatter_add_rows = &scatter_add_rows<T>;
  t.adam_update = &adam_update<T>;
  t.sum = &sum<T>;
  t.dot = &dot<T>;
  return t;
}

}  // namespace stqe::kernels::ref
