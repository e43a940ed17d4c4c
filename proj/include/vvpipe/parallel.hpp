#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace vvpipe {

inline int default_thread_count() {
  if (const char* env = std::getenv("VVPIPE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw > 8 ? 8 : hw);
}

// Runs body(i) for i in [begin, end) across threads. Work items must write
// to disjoint state; scheduling carries no information into results, so
// output is identical for any thread count. First exception is rethrown.
inline void parallel_for(std::size_t begin, std::size_t end,
                         const std::function<void(std::size_t)>& body,
                         int threads = 0) {
  const std::size_t n = end > begin ? end - begin : 0;
  if (threads <= 0) threads = default_thread_count();
  if (n == 0) return;
  if (threads == 1 || n == 1) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= end) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t spawn =
      std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  pool.reserve(spawn);
  for (std::size_t t = 0; t < spawn; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// Deterministic blocked reduction: [0, n) is cut into fixed-size chunks,
// per-chunk partials are computed in parallel, and the caller combines them
// in chunk order. The chunk grid depends only on (n, chunk_size), never on
// the thread count, so floating-point sums reproduce exactly.
template <typename Partial>
std::vector<Partial> parallel_chunk_map(
    std::size_t n, std::size_t chunk_size,
    const std::function<Partial(std::size_t chunk_index, std::size_t lo,
                                std::size_t hi)>& fn,
    int threads = 0) {
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t num_chunks = (n + chunk_size - 1) / chunk_size;
  std::vector<Partial> partials(num_chunks);
  parallel_for(
      0, num_chunks,
      [&](std::size_t c) {
        const std::size_t lo = c * chunk_size;
        const std::size_t hi = std::min(n, lo + chunk_size);
        partials[c] = fn(c, lo, hi);
      },
      threads);
  return partials;
}

}  // namespace vvpipe
