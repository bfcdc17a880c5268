#include "iat/threads.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace iat {

namespace {
std::atomic<int> g_max_threads{1};
}

void set_max_threads(int n) {
  g_max_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

int max_threads() { return g_max_threads.load(std::memory_order_relaxed); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(max_threads()), n);
  if (workers <= 1 || n < 2) {
    fn(0, n);
    return;
  }
  // Contiguous chunks; worker count only affects who computes a range, never
  // the order of accumulation inside an output cell.
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace iat
