#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace tpemimo {

// Runs fn(chunk_index, begin, end) over contiguous index chunks on up to
// `workers` threads. Callers keep determinism by writing results into
// per-index or per-chunk slots, or by merging with order-free (integer)
// arithmetic.
template <typename Fn>
int parallel_chunks(std::int64_t count, int workers, Fn&& fn) {
  workers = std::max(1, workers);
  if (workers == 1 || count <= 1) {
    if (count > 0) fn(0, std::int64_t{0}, count);
    return count > 0 ? 1 : 0;
  }
  const int used = static_cast<int>(std::min<std::int64_t>(workers, count));
  const std::int64_t per = (count + used - 1) / used;
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(used);
  int launched = 0;
  for (int t = 0; t < used; ++t) {
    const std::int64_t begin = t * per;
    const std::int64_t end = std::min(count, begin + per);
    if (begin >= end) break;
    ++launched;
    threads.emplace_back([&, t, begin, end] {
      try {
        fn(t, begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return launched;
}

inline int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace tpemimo
