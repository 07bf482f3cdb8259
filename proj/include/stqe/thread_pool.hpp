#pragma once

#include <cstddef>
#include <functional>

namespace stqe {

// Runs fn(i) for i in [0, count). With `threads` == 0 everything runs inline
// on the calling thread (the bitwise reference mode). Worker threads receive
// contiguous index chunks, so any per-index output slot is written exactly
// once and the result does not depend on scheduling.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& fn);

// Same, with threads taken from STQE_THREADS.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace stqe
