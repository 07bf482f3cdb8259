#pragma once

#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>

namespace stqe {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic RNG. std::mt19937_64 has a standard-mandated sequence, but
// the std distributions do not, so the uniform draws are made by hand here.
class Rng {
public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1) with 53 random bits
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return eng_() % n; }

  // independent substream for (seed, stream_id) pairs
  static Rng derive(uint64_t seed, uint64_t stream) {
    // splitmix64 pass so that nearby (seed, stream) pairs decorrelate
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

private:
  std::mt19937_64 eng_;
};

// Worker count from STQE_THREADS; 0 (or unset) means serial reference mode.
inline int env_thread_count() {
  const char* v = std::getenv("STQE_THREADS");
  if (!v) return 0;
  long n = std::strtol(v, nullptr, 10);
  return n > 0 ? int(n) : 0;
}

}  // namespace stqe
