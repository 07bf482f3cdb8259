#include "stqe/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <mutex>
#include <string>

#include "stqe/common.hpp"
#include "stqe/kernels_ref.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define STQE_HAVE_AVX2_TU 1
namespace stqe::kernels::avx2 {
void install(KernelTable<float>&);
void install(KernelTable<double>&);
}  // namespace stqe::kernels::avx2
#endif

#if defined(__aarch64__)
#define STQE_HAVE_NEON_TU 1
namespace stqe::kernels::neon {
void install(KernelTable<float>&);
void install(KernelTable<double>&);
}  // namespace stqe::kernels::neon
#endif

namespace stqe::kernels {

namespace {

Backend g_backend = Backend::scalar;
KernelTable<float> g_table_f = ref::make_table<float>();
KernelTable<double> g_table_d = ref::make_table<double>();
std::once_flag g_init_once;

bool cpu_has_avx2() {
#if defined(STQE_HAVE_AVX2_TU)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

bool cpu_has_neon() {
#if defined(STQE_HAVE_NEON_TU)
  return true;  // baseline on aarch64
#else
  return false;
#endif
}

void apply_backend(Backend b) {
  g_table_f = ref::make_table<float>();
  g_table_d = ref::make_table<double>();
#if defined(STQE_HAVE_AVX2_TU)
  if (b == Backend::avx2) {
    avx2::install(g_table_f);
    avx2::install(g_table_d);
  }
#endif
#if defined(STQE_HAVE_NEON_TU)
  if (b == Backend::neon) {
    neon::install(g_table_f);
    neon::install(g_table_d);
  }
#endif
  g_backend = b;
}

void init_from_env() {
  Backend pick = Backend::scalar;
  if (cpu_has_avx2()) pick = Backend::avx2;
  if (cpu_has_neon()) pick = Backend::neon;
  if (const char* env = std::getenv("STQE_SIMD")) {
    const std::string v(env);
    if (v == "scalar")
      pick = Backend::scalar;
    else if (v == "avx2" && cpu_has_avx2())
      pick = Backend::avx2;
    else if (v == "neon" && cpu_has_neon())
      pick = Backend::neon;
    // "auto" or anything unavailable keeps the detected choice
  }
  apply_backend(pick);
}

void ensure_init() { std::call_once(g_init_once, init_from_env); }

}  // namespace

Backend active_backend() {
  ensure_init();
  return g_backend;
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2: return cpu_has_avx2();
    case Backend::neon: return cpu_has_neon();
  }
  return false;
}

void force_backend(Backend b) {
  ensure_init();
  if (!backend_available(b))
    throw Error(std::string("kernel backend not available on this host: ") +
                backend_name(b));
  apply_backend(b);
}

template <>
const KernelTable<float>& table<float>() {
  ensure_init();
  return g_table_f;
}

template <>
const KernelTable<double>& table<double>() {
  ensure_init();
  return g_table_d;
}

}  // namespace stqe::kernels
