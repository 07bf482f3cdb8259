#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops of the pipeline. Every kernel exists as a scalar
// reference implementation (kernels::ref) and, where the hardware supports
// it, as an AVX2 or NEON variant selected once at startup.
//
// The vector variants are written to preserve the reference accumulation
// order per output element (no FMA, no reassociation), so all backends
// produce bit-identical results. Kernels whose natural vectorization would
// reorder a reduction (sum, dot) or change transcendental rounding
// (sigmoid_forward) are sequential in every backend.

namespace stqe::kernels {

enum class Backend { scalar, avx2, neon };

// Active backend: resolved on first use from CPU features and the STQE_SIMD
// environment variable (auto | scalar | avx2 | neon).
Backend active_backend();
const char* backend_name(Backend b);
// Override for tests; throws Error if the backend is unavailable.
void force_backend(Backend b);
bool backend_available(Backend b);

template <class T>
struct KernelTable {
  // y[r,j] = b[j] + sum_i x[r,i] * w[i,j]
  void (*linear_forward)(const T* x, const T* w, const T* b, T* y,
                         std::size_t rows, std::size_t cin, std::size_t cout);
  // gx[r,i] += sum_j gy[r,j] * w[i,j]
  void (*linear_backward_input)(const T* gy, const T* w, T* gx,
                                std::size_t rows, std::size_t cin,
                                std::size_t cout);
  // gw[i,j] += sum_r x[r,i] * gy[r,j]; gb[j] += sum_r gy[r,j]
  void (*linear_backward_params)(const T* x, const T* gy, T* gw, T* gb,
                                 std::size_t rows, std::size_t cin,
                                 std::size_t cout);

  void (*leaky_relu_forward)(const T* x, T* y, std::size_t n, T slope);
  // gx[i] += gy[i] * (x[i] >= 0 ? 1 : slope)
  void (*leaky_relu_backward)(const T* x, const T* gy, T* gx, std::size_t n,
                              T slope);
  void (*sigmoid_forward)(const T* x, T* y, std::size_t n);
  // gx[i] += gy[i] * y[i] * (1 - y[i])
  void (*sigmoid_backward)(const T* y, const T* gy, T* gx, std::size_t n);

  void (*add)(const T* a, const T* b, T* y, std::size_t n);
  void (*sub)(const T* a, const T* b, T* y, std::size_t n);
  void (*mul)(const T* a, const T* b, T* y, std::size_t n);
  void (*mul_acc)(const T* a, const T* b, T* y, std::size_t n);  // y += a*b
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);        // y += a*x
  void (*scale)(const T* x, T alpha, T* y, std::size_t n);
  void (*clamp)(const T* x, T lo, T hi, T* y, std::size_t n);

  // y[r*c + q] = x[r*c + q] * w[r]   (and the accumulating form)
  void (*mul_rowscalar)(const T* x, const T* w, T* y, std::size_t rows,
                        std::size_t c);
  void (*mul_rowscalar_acc)(const T* x, const T* w, T* y, std::size_t rows,
                            std::size_t c);

  // x is rows*k*c; y[r,q] = max_j x[r,j,q], argmax = first maximal j
  void (*max_pool_forward)(const T* x, T* y, int32_t* argmax, std::size_t rows,
                           std::size_t k, std::size_t c);
  void (*max_pool_backward)(const T* gy, const int32_t* argmax, T* gx,
                            std::size_t rows, std::size_t k, std::size_t c);

  void (*gather_rows)(const T* x, const int32_t* idx, T* y, std::size_t nq,
                      std::size_t c);
  void (*scatter_add_rows)(const T* gy, const int32_t* idx, T* gx,
                           std::size_t nq, std::size_t c);

  // p -= lr * (m/bc1) / (sqrt(v/bc2) + eps), with m, v updated in place.
  // inv_bc1 = 1/(1 - beta1^t), inv_bc2 likewise, precomputed by the caller.
  void (*adam_update)(T* p, const T* g, T* m, T* v, std::size_t n, T lr,
                      T beta1, T beta2, T eps, T inv_bc1, T inv_bc2);

  // Sequential reductions (shared by all backends).
  T (*sum)(const T* x, std::size_t n);
  T (*dot)(const T* a, const T* b, std::size_t n);
};

template <class T>
const KernelTable<T>& table();

template <>
const KernelTable<float>& table<float>();
template <>
const KernelTable<double>& table<double>();

// Thin call-through helpers so call sites read like plain functions.
template <class T>
inline void linear_forward(const T* x, const T* w, const T* b, T* y,
                           std::size_t rows, std::size_t cin,
                           std::size_t cout) {
  table<T>().linear_forward(x, w, b, y, rows, cin, cout);
}
template <class T>
inline void linear_backward_input(const T* gy, const T* w, T* gx,
                                  std::size_t rows, std::size_t cin,
                                  std::size_t cout) {
  table<T>().linear_backward_input(gy, w, gx, rows, cin, cout);
}
template <class T>
inline void linear_backward_params(const T* x, const T* gy, T* gw, T* gb,
                                   std::size_t rows, std::size_t cin,
                                   std::size_t cout) {
  table<T>().linear_backward_params(x, gy, gw, gb, rows, cin, cout);
}
template <class T>
inline void leaky_relu_forward(const T* x, T* y, std::size_t n, T slope) {
  table<T>().leaky_relu_forward(x, y, n, slope);
}
template <class T>
inline void leaky_relu_backward(const T* x, const T* gy, T* gx, std::size_t n,
                                T slope) {
  table<T>().leaky_relu_backward(x, gy, gx, n, slope);
}
template <class T>
inline void sigmoid_forward(const T* x, T* y, std::size_t n) {
  table<T>().sigmoid_forward(x, y, n);
}
template <class T>
inline void sigmoid_backward(const T* y, const T* gy, T* gx, std::size_t n) {
  table<T>().sigmoid_backward(y, gy, gx, n);
}
template <class T>
inline void add(const T* a, const T* b, T* y, std::size_t n) {
  table<T>().add(a, b, y, n);
}
template <class T>
inline void sub(const T* a, const T* b, T* y, std::size_t n) {
  table<T>().sub(a, b, y, n);
}
template <class T>
inline void mul(const T* a, const T* b, T* y, std::size_t n) {
  table<T>().mul(a, b, y, n);
}
template <class T>
inline void mul_acc(const T* a, const T* b, T* y, std::size_t n) {
  table<T>().mul_acc(a, b, y, n);
}
template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  table<T>().axpy(alpha, x, y, n);
}
template <class T>
inline void scale(const T* x, T alpha, T* y, std::size_t n) {
  table<T>().scale(x, alpha, y, n);
}
template <class T>
inline void clamp(const T* x, T lo, T hi, T* y, std::size_t n) {
  table<T>().clamp(x, lo, hi, y, n);
}
template <class T>
inline void mul_rowscalar(const T* x, const T* w, T* y, std::size_t rows,
                          std::size_t c) {
  table<T>().mul_rowscalar(x, w, y, rows, c);
}
template <class T>
inline void mul_rowscalar_acc(const T* x, const T* w, T* y, std::size_t rows,
                              std::size_t c) {
  table<T>().mul_rowscalar_acc(x, w, y, rows, c);
}
template <class T>
inline void max_pool_forward(const T* x, T* y, int32_t* argmax,
                             std::size_t rows, std::size_t k, std::size_t c) {
  table<T>().max_pool_forward(x, y, argmax, rows, k, c);
}
template <class T>
inline void max_pool_backward(const T* gy, const int32_t* argmax, T* gx,
                              std::size_t rows, std::size_t k, std::size_t c) {
  table<T>().max_pool_backward(gy, argmax, gx, rows, k, c);
}
template <class T>
inline void gather_rows(const T* x, const int32_t* idx, T* y, std::size_t nq,
                        std::size_t c) {
  table<T>().gather_rows(x, idx, y, nq, c);
}
template <class T>
inline void scatter_add_rows(const T* gy, const int32_t* idx, T* gx,
                             std::size_t nq, std::size_t c) {
  table<T>().scatter_add_rows(gy, idx, gx, nq, c);
}
template <class T>
inline void adam_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr,
                        T beta1, T beta2, T eps, T inv_bc1, T inv_bc2) {
  table<T>().adam_update(p, g, m, v, n, lr, beta1, beta2, eps, inv_bc1,
                         inv_bc2);
}
template <class T>
inline T sum(const T* x, std::size_t n) {
  return table<T>().sum(x, n);
}
template <class T>
inline T dot(const T* a, const T* b, std::size_t n) {
  return table<T>().dot(a, b, n);
}

}  // namespace stqe::kernels
