// NEON kernel variants (aarch64). Same bit-parity discipline as the AVX2
// file: explicit multiply then add per lane, never a fused form.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cstring>

#include "stqe/kernels.hpp"
#include "stqe/kernels_ref.hpp"

namespace stqe::kernels::neon {

void linear_forward(const float* x, const float* w, const float* b, float* y,
                    std::size_t rows, std::size_t cin, std::size_t cout) {
  const std::size_t cv = cout & ~std::size_t(3);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * cin;
    float* yr = y + r * cout;
    for (std::size_t j = 0; j < cv; j += 4) {
      float32x4_t acc = vld1q_f32(b + j);
      for (std::size_t i = 0; i < cin; ++i)
        acc = vaddq_f32(acc, vmulq_f32(vdupq_n_f32(xr[i]),
                                       vld1q_f32(w + i * cout + j)));
      vst1q_f32(yr + j, acc);
    }
    for (std::size_t j = cv; j < cout; ++j) {
      float acc = b[j];
      for (std::size_t i = 0; i < cin; ++i) acc += xr[i] * w[i * cout + j];
      yr[j] = acc;
    }
  }
}

void leaky_relu_forward(const float* x, float* y, std::size_t n, float slope) {
  const std::size_t nv = n & ~std::size_t(3);
  const float32x4_t vs = vdupq_n_f32(slope);
  const float32x4_t zero = vdupq_n_f32(0.0f);
  for (std::size_t i = 0; i < nv; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    const uint32x4_t ge = vcgeq_f32(v, zero);
    vst1q_f32(y + i, vbslq_f32(ge, v, vmulq_f32(vs, v)));
  }
  for (std::size_t i = nv; i < n; ++i)
    y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
}

void add(const float* a, const float* b, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(3);
  for (std::size_t i = 0; i < nv; i += 4)
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (std::size_t i = nv; i < n; ++i) y[i] = a[i] + b[i];
}

void sub(const float* a, const float* b, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(3);
  for (std::size_t i = 0; i < nv; i += 4)
    vst1q_f32(y + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (std::size_t i = nv; i < n; ++i) y[i] = a[i] - b[i];
}

void mul(const float* a, const float* b, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(3);
  for (std::size_t i = 0; i < nv; i += 4)
    vst1q_f32(y + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (std::size_t i = nv; i < n; ++i) y[i] = a[i] * b[i];
}

void mul_acc(const float* a, const float* b, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(3);
  for (std::size_t i = 0; i < nv; i += 4)
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i),
                               vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i))));
  for (std::size_t i = nv; i < n; ++i) y[i] += a[i] * b[i];
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(3);
  const float32x4_t va = vdupq_n_f32(alpha);
  for (std::size_t i = 0; i < nv; i += 4)
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vmulq_f32(va, vld1q_f32(x + i))));
  for (std::size_t i = nv; i < n; ++i) y[i] += alpha * x[i];
}

void scale(const float* x, float alpha, float* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t(3);
  const float32x4_t va = vdupq_n_f32(alpha);
  for (std::size_t i = 0; i < nv; i += 4)
    vst1q_f32(y + i, vmulq_f32(va, vld1q_f32(x + i)));
  for (std::size_t i = nv; i < n; ++i) y[i] = alpha * x[i];
}

void mul_rowscalar(const float* x, const float* w, float* y, std::size_t rows,
                   std::size_t c) {
  const std::size_t cv = c & ~std::size_t(3);
  for (std::size_t r = 0; r < rows; ++r) {
    const float32x4_t wr = vdupq_n_f32(w[r]);
    const float* xr = x + r * c;
    float* yr = y + r * c;
    for (std::size_t q = 0; q < cv; q += 4)
      vst1q_f32(yr + q, vmulq_f32(vld1q_f32(xr + q), wr));
    for (std::size_t q = cv; q < c; ++q) yr[q] = xr[q] * w[r];
  }
}

void mul_rowscalar_acc(const float* x, const float* w, float* y,
                       std::size_t rows, std::size_t c) {
  const std::size_t cv = c & ~std::size_t(3);
  for (std::size_t r = 0; r < rows; ++r) {
    const float32x4_t wr = vdupq_n_f32(w[r]);
    const float* xr = x + r * c;
    float* yr = y + r * c;
    for (std::size_t q = 0; q < cv; q += 4)
      vst1q_f32(yr + q, vaddq_f32(vld1q_f32(yr + q), vmulq_f32(vld1q_f32(xr + q), wr)));
    for (std::size_t q = cv; q < c; ++q) yr[q] += xr[q] * w[r];
  }
}

void max_pool_forward(const float* x, float* y, int32_t* argmax,
                      std::size_t rows, std::size_t k, std::size_t c) {
  const std::size_t cv = c & ~std::size_t(3);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * k * c;
    float* yr = y + r * c;
    int32_t* ar = argmax + r * c;
    for (std::size_t q = 0; q < cv; q += 4) {
      float32x4_t best = vld1q_f32(xr + q);
      int32x4_t barg = vdupq_n_s32(0);
      for (std::size_t j = 1; j < k; ++j) {
        const float32x4_t v = vld1q_f32(xr + j * c + q);
        const uint32x4_t gt = vcgtq_f32(v, best);
        best = vbslq_f32(gt, v, best);
        barg = vbslq_s32(gt, vdupq_n_s32(int32_t(j)), barg);
      }
      vst1q_f32(yr + q, best);
      vst1q_s32(ar + q, barg);
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
  const std::size_t cv = c & ~std::size_t(3);
  for (std::size_t q = 0; q < nq; ++q) {
    const float* src = gy + q * c;
    float* dst = gx + std::size_t(idx[q]) * c;
    for (std::size_t j = 0; j < cv; j += 4)
      vst1q_f32(dst + j, vaddq_f32(vld1q_f32(dst + j), vld1q_f32(src + j)));
    for (std::size_t j = cv; j < c; ++j) dst[j] += src[j];
  }
}

void install(KernelTable<float>& t) {
  t.linear_forward = &linear_forward;
  t.leaky_relu_forward = &leaky_relu_forward;
  t.add = &add;
  t.sub = &sub;
  t.mul = &mul;
  t.mul_acc = &mul_acc;
  t.axpy = &axpy;
  t.scale = &scale;
  t.mul_rowscalar = &mul_rowscalar;
  t.mul_rowscalar_acc = &mul_rowscalar_acc;
  t.max_pool_forward = &max_pool_forward;
  t.scatter_add_rows = &scatter_add_rows;
}

void install(KernelTable<double>&) {
  // double path stays on the reference kernels
}

}  // namespace stqe::kernels::neon

#endif  // __aarch64__
