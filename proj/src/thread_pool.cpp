#include "stqe/thread_pool.hpp"

#include <algorithm>
#include <thread>
#include <vector>

#include "stqe/common.hpp"

namespace stqe {

void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  if (threads <= 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t nworkers = std::min<std::size_t>(threads, count);
  const std::size_t chunk = (count + nworkers - 1) / nworkers;
  std::vector<std::thread> pool;
  pool.reserve(nworkers);
  for (std::size_t w = 0; w < nworkers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  parallel_for(count, env_thread_count(), fn);
}

}  // namespace stqe
