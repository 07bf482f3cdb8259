// AVX2 kernel variants. Compiled with -mavx2 only (no -mfma): each vector
// lane must execute the same multiply-then-add sequence as the scalar
// reference so that results are bit-identical across backends.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>
#include <vector>

#include "stqe/kernels.hpp"
#include "stqe/kernels_ref.hpp"

namespace stqe::kernels::avx2 {

namespace {

inline __m256 load8(const float* p) { return _mm256_loadu_ps(p); }
inline void store8(float* p, __m256 v) { _mm256_storeu_ps(p, v); }
inline __m256d load4(const double* p) { return _mm256_loadu_pd(p); }
inline void store4(double* p, __m256d v) { _mm256_storeu_pd(p, v); }

}  // namespace

// ---------------------------------------------------------------- float ---

void linear_forward(const float* x, const float* w, const float* b, float* y,
                    std::size_t rows, std::size_t cin, std::size_t cout) {
  const std::size_t cv = cout & ~std::size_t(7);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * cin;
    float* yr = y + r * cout;
    for (std::size_t j = 0; j < cv; j += 8) {
      __m256 acc = load8(b + j);
      const float* wj = w + j;
      for (std::size_t i = 0; i < cin; ++i)
        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_set1_ps(xr[i]),
                                               load8(wj + i * cout)));
      store8(yr + j, acc);
    }
    for (std::size_t j = cv; j < cout; ++j) {
      float acc = b[j];
      for (std::size_t i = 0; i < cin; ++i) acc += xr[i] * w[i * cout + j];
      yr[j] = acc;
    }
  }
}

void linear_backward_input(const float* gy, const float* w, float* gx,
                           std::size_t rows, std::size_t cin,
                           std::size_t cout) {
  // Transposed copy of w so the i dimension is contiguous per j.
  std::vector<float> wt(cin * cout);
  for (std::size_t i = 0; i < cin; ++i)
    for (std::size_t j = 0; j < cout; ++j) wt[j * cin + i] = w[i * cout + j];
  const std::size_t iv = cin & ~std::size_t(7);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* gyr = gy + r * cout;
    float* gxr = gx + r * cin;
    for (std::size_t i = 0; i < iv; i += 8) {
      __m256 acc = load8(gxr + i);
      for (std::size_t j = 0; j < cout; ++j)
        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_set1_ps(gyr[j]),
                                               load8(wt.data() + j * cin + i)));
      store8(gxr + i, acc);
    }
    for (std::size_t i = iv; i < cin; ++i) {
      float acc = gxr[i];
      for (std::size_t j = 0; j < cout; ++j) acc += gyr[j] * wt[j * cin + i];
      gxr[i] = acc;
    }
  }
}

void linear_backward_params(const float* x, const float* gy, float* gw,
                            float* gb, std::size_t rows, std::size_t cin,
                            std::size_t cout) {
  const std::size_t cv = cout & ~std::size_t(7);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * cin;
    const float* gyr = gy + r * cout;
    for (std::size_t i = 0; i < cin; ++i) {
      const __m256 xi = _mm256_set1_ps(xr[i]);
      float* gwi = gw + i * cout;
      for (std::size_t j = 0; j < cv; j += 8)
        store8(gwi + j,
               _mm256_add_ps(load8(gwi + j), _mm256_mul_ps(xi, load8(gyr + j))));
      for (std::size_t j = cv; j < cout; ++j) gwi[j] += xr[i] * gyr[j];
    }
    for (std::size_t j = 0; j < cv; j += 8)
      store8(gb + j, _mm256_add_ps(load8(gb + j), load8(gyr + j)));
    for (std::size_t j = cv; j < cout; ++j) gb[j] += gyr[j];
  }
}

void leaky_relu_forward(const float* x, float* y, std::size_t n, float slope) {
  const std::size_t nv = n & ~std::size_t(7);
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  for (std::size_t i = 0; i < nv; i += 8) {
    const __m256 v = load8(x + i);
    const __m256 neg = _mm256_mul_ps(vs, v);
    const __m256 mask = _mm256_cmp_ps(v, zero, _CMP_GE_OQ);
    store8(y + i, _mm256_blendv_ps(neg, v, mask));
  }
  for (std::size_t i = nv; i < n; ++i)
    y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_backward(const float* x, const float* gy, float* gx,
                         std::size_t n, float slope) {
  const std::size_t nv = n & ~std::size_t(7);
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  for (std::size_t i = 0; i < nv; i += 8) {
    const __m256 g = load8(gy + i);
    const __m256 mask = _mm256_cmp_ps(load8(x + i), zero, _CMP_GE_OQ);
    const __m256 d = _mm256_blendv_ps(_mm256_mul_ps(vs, g), g, mask);
    store8(gx + i, _mm256_add_ps(load8(gx + i), d));
  }
  for (std::size_t i = nv; i < n; ++i)
    gx[i] += x[i] >= 0.0f ? gy[i] : slope * gy[i];
}

void sigmoid_backward(const float* y, const float* gy, float* gx,
                      std::size_t n) {
  const std::size_t nv = n & ~std::size_t(7);
  const __m256 one = _mm256_set1_ps(1.0f);
  for (std::size_t i = 0; i < nv; i += 8) {
    const __m256 v = load8(y + i);
    const __m256 d =
        _mm256_mul_ps(_mm256_mul_ps(load8(gy + i), v), _mm256_sub_ps(one, v));
    store8(gx + i, _mm256_add_ps(load8(gx + i), d));
  }
  for (std::size_t i = nv; i < n; ++i) gx[i] += gy[i] * y[i] * (1.0f - y[i]);
}

void add(const float* a, const float* b, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(7);
  for (std::size_t i = 0; i < nv; i += 8)
    store8(y + i, _mm256_add_ps(load8(a + i), load8(b + i)));
  for (std::size_t i = nv; i < n; ++i) y[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(7);
  for (std::size_t i = 0; i < nv; i += 8)
    store8(y + i, _mm256_sub_ps(load8(a + i), load8(b + i)));
  for (std::size_t i = nv; i < n; ++i) y[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(7);
  for (std::size_t i = 0; i < nv; i += 8)
    store8(y + i, _mm256_mul_ps(load8(a + i), load8(b + i)));
  for (std::size_t i = nv; i < n; ++i) y[i] = a[i] * b[i];
}

void mul_acc(const float* a, const float* b, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(7);
  for (std::size_t i = 0; i < nv; i += 8)
    store8(y + i, _mm256_add_ps(load8(y + i),
                                _mm256_mul_ps(load8(a + i), load8(b + i))));
  for (std::size_t i = nv; i < n; ++i) y[i] += a[i] * b[i];
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(7);
  const __m256 va = _mm256_set1_ps(alpha);
  for (std::size_t i = 0; i < nv; i += 8)
    store8(y + i, _mm256_add_ps(load8(y + i), _mm256_mul_ps(va, load8(x + i))));
  for (std::size_t i = nv; i < n; ++i) y[i] += alpha * x[i];
}

void scale(const float* x, float alpha, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(7);
  const __m256 va = _mm256_set1_ps(alpha);
  for (std::size_t i = 0; i < nv; i += 8)
    store8(y + i, _mm256_mul_ps(va, load8(x + i)));
  for (std::size_t i = nv; i < n; ++i) y[i] = alpha * x[i];
}

void clamp(const float* x, float lo, float hi, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(7);
  const __m256 vlo = _mm256_set1_ps(lo);
  const __m256 vhi = _mm256_set1_ps(hi);
  for (std::size_t i = 0; i < nv; i += 8)
    store8(y + i, _mm256_min_ps(_mm256_max_ps(load8(x + i), vlo), vhi));
  for (std::size_t i = nv; i < n; ++i) {
    float v = x[i];
    if (v < lo) v = lo;
    if (v > hi) v = hi;
    y[i] = v;
  }
}

void mul_rowscalar(const float* x, const float* w, float* y, std::size_t rows,
                   std::size_t c) {
  const std::size_t cv = c & ~std::size_t(7);
  for (std::size_t r = 0; r < rows; ++r) {
    const __m256 wr = _mm256_set1_ps(w[r]);
    const float* xr = x + r * c;
    float* yr = y + r * c;
    for (std::size_t q = 0; q < cv; q += 8)
      store8(yr + q, _mm256_mul_ps(load8(xr + q), wr));
    for (std::size_t q = cv; q < c; ++q) yr[q] = xr[q] * w[r];
  }
}

void mul_rowscalar_acc(const float* x, const float* w, float* y,
                       std::size_t rows, std::size_t c) {
  const std::size_t cv = c & ~std::size_t(7);
  for (std::size_t r = 0; r < rows; ++r) {
    const __m256 wr = _mm256_set1_ps(w[r]);
    const float* xr = x + r * c;
    float* yr = y + r * c;
    for (std::size_t q = 0; q < cv; q += 8)
      store8(yr + q, _mm256_add_ps(load8(yr + q), _mm256_mul_ps(load8(xr + q), wr)));
    for (std::size_t q = cv; q < c; ++q) yr[q] += xr[q] * w[r];
  }
}

void max_pool_forward(const float* x, float* y, int32_t* argmax,
                      std::size_t rows, std::size_t k, std::size_t c) {
  const std::size_t cv = c & ~std::size_t(7);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * k * c;
    float* yr = y + r * c;
    int32_t* ar = argmax + r * c;
    for (std::size_t q = 0; q < cv; q += 8) {
      __m256 best = load8(xr + q);
      __m256i barg = _mm256_setzero_si256();
      for (std::size_t j = 1; j < k; ++j) {
        const __m256 v = load8(xr + j * c + q);
        const __m256 gt = _mm256_cmp_ps(v, best, _CMP_GT_OQ);
        best = _mm256_blendv_ps(best, v, gt);
        barg = _mm256_blendv_epi8(barg, _mm256_set1_epi32(int32_t(j)),
                                  _mm256_castps_si256(gt));
      }
      store8(yr + q, best);
      _mm256_storeu_si256(reinterpret_cast<__m256i*>(ar + q), barg);
    }
    for (std::size_t q = cv; q < c; ++q) {
      float best = xr[q];
      int32_t arg = 0;
      for (std::size_t j = 1; j < k; ++j) {
        const float v = xr[j * c + q];
        if (v > best) {
          best = v;
          arg = int32_t(j);
        }
      }
      yr[q] = best;
      ar[q] = arg;
    }
  }
}

void scatter_add_rows(const float* gy, const int32_t* idx, float* gx,
                      std::size_t nq, std::size_t c) {
  const std::size_t cv = c & ~std::size_t(7);
  for (std::size_t q = 0; q < nq; ++q) {
    const float* src = gy + q * c;
    float* dst = gx + std::size_t(idx[q]) * c;
    for (std::size_t j = 0; j < cv; j += 8)
      store8(dst + j, _mm256_add_ps(load8(dst + j), load8(src + j)));
    for (std::size_t j = cv; j < c; ++j) dst[j] += src[j];
  }
}

void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 float lr, float beta1, float beta2, float eps, float inv_bc1,
                 float inv_bc2) {
  const float om1 = 1.0f - beta1;
  const float om2 = 1.0f - beta2;
  const std::size_t nv = n & ~std::size_t(7);
  const __m256 vb1 = _mm256_set1_ps(beta1), vo1 = _mm256_set1_ps(om1);
  const __m256 vb2 = _mm256_set1_ps(beta2), vo2 = _mm256_set1_ps(om2);
  const __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
  const __m256 vc1 = _mm256_set1_ps(inv_bc1), vc2 = _mm256_set1_ps(inv_bc2);
  for (std::size_t i = 0; i < nv; i += 8) {
    const __m256 gi = load8(g + i);
    const __m256 mi =
        _mm256_add_ps(_mm256_mul_ps(vb1, load8(m + i)), _mm256_mul_ps(vo1, gi));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(vb2, load8(v + i)),
                                    _mm256_mul_ps(vo2, _mm256_mul_ps(gi, gi)));
    store8(m + i, mi);
    store8(v + i, vi);
    const __m256 mhat = _mm256_mul_ps(mi, vc1);
    const __m256 vhat = _mm256_mul_ps(vi, vc2);
    const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), den);
    store8(p + i, _mm256_sub_ps(load8(p + i), step));
  }
  if (nv < n)
    ref::adam_update(p + nv, g + nv, m + nv, v + nv, n - nv, lr, beta1, beta2,
                     eps, inv_bc1, inv_bc2);
}

// --------------------------------------------------------------- double ---

void linear_forward_d(const double* x, const double* w, const double* b,
                      double* y, std::size_t rows, std::size_t cin,
                      std::size_t cout) {
  const std::size_t cv = cout & ~std::size_t(3);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cin;
    double* yr = y + r * cout;
    for (std::size_t j = 0; j < cv; j += 4) {
      __m256d acc = load4(b + j);
      const double* wj = w + j;
      for (std::size_t i = 0; i < cin; ++i)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(xr[i]),
                                               load4(wj + i * cout)));
      store4(yr + j, acc);
    }
    for (std::size_t j = cv; j < cout; ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < cin; ++i) acc += xr[i] * w[i * cout + j];
      yr[j] = acc;
    }
  }
}

void linear_backward_input_d(const double* gy, const double* w, double* gx,
                             std::size_t rows, std::size_t cin,
                             std::size_t cout) {
  std::vector<double> wt(cin * cout);
  for (std::size_t i = 0; i < cin; ++i)
    for (std::size_t j = 0; j < cout; ++j) wt[j * cin + i] = w[i * cout + j];
  const std::size_t iv = cin & ~std::size_t(3);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* gyr = gy + r * cout;
    double* gxr = gx + r * cin;
    for (std::size_t i = 0; i < iv; i += 4) {
      __m256d acc = load4(gxr + i);
      for (std::size_t j = 0; j < cout; ++j)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(gyr[j]),
                                               load4(wt.data() + j * cin + i)));
      store4(gxr + i, acc);
    }
    for (std::size_t i = iv; i < cin; ++i) {
      double acc = gxr[i];
      for (std::size_t j = 0; j < cout; ++j) acc += gyr[j] * wt[j * cin + i];
      gxr[i] = acc;
    }
  }
}

void linear_backward_params_d(const double* x, const double* gy, double* gw,
                              double* gb, std::size_t rows, std::size_t cin,
                              std::size_t cout) {
  const std::size_t cv = cout & ~std::size_t(3);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cin;
    const double* gyr = gy + r * cout;
    for (std::size_t i = 0; i < cin; ++i) {
      const __m256d xi = _mm256_set1_pd(xr[i]);
      double* gwi = gw + i * cout;
      for (std::size_t j = 0; j < cv; j += 4)
        store4(gwi + j,
               _mm256_add_pd(load4(gwi + j), _mm256_mul_pd(xi, load4(gyr + j))));
      for (std::size_t j = cv; j < cout; ++j) gwi[j] += xr[i] * gyr[j];
    }
    for (std::size_t j = 0; j < cv; j += 4)
      store4(gb + j, _mm256_add_pd(load4(gb + j), load4(gyr + j)));
    for (std::size_t j = cv; j < cout; ++j) gb[j] += gyr[j];
  }
}

// -------------------------------------------------------------- install ---

void install(KernelTable<float>& t) {
  t.linear_forward = &linear_forward;
  t.linear_backward_input = &linear_backward_input;
  t.linear_backward_params = &linear_backward_params;
  t.leaky_relu_forward = &leaky_relu_forward;
  t.leaky_relu_backward = &leaky_relu_backward;
  t.sigmoid_backward = &sigmoid_backward;
  t.add = &add;
  t.sub = &sub;
  t.mul = &mul;
  t.mul_acc = &mul_acc;
  t.axpy = &axpy;
  t.scale = &scale;
  t.clamp = &clamp;
  t.mul_rowscalar = &mul_rowscalar;
  t.mul_rowscalar_acc = &mul_rowscalar_acc;
  t.max_pool_forward = &max_pool_forward;
  t.scatter_add_rows = &scatter_add_rows;
  t.adam_update = &adam_update;
  // sigmoid_forward, sum, dot, gather_rows, max_pool_backward: reference
  // versions are kept (sequential reductions / memory-bound moves).
}

void install(KernelTable<double>& t) {
  t.linear_forward = &linear_forward_d;
  t.linear_backward_input = &linear_backward_input_d;
  t.linear_backward_params = &linear_backward_params_d;
}

}  // namespace stqe::kernels::avx2

#endif  // x86_64
