#pragma once

#include <cstdint>
#include <functional>

namespace mfos {

// Worker count: min(hardware_concurrency, MFOS_THREADS) when the env var is
// set, else hardware_concurrency. Always >= 1. Read once per process.
int thread_count();

// Splits [0, n) into at most thread_count() contiguous chunks and runs
// fn(begin, end) on each. Chunk boundaries depend only on n and the thread
// count, so disjoint-write kernels are bitwise reproducible for a fixed
// thread count (and independent of it when per-element work is).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace mfos
