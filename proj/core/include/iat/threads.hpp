#pragma once

#include <cstddef>
#include <functional>

namespace iat {

// Global worker cap for kernel-level parallelism. Default is 1: everything
// runs on the calling thread. Results are identical for any cap because work
// is split into disjoint output ranges and every output cell is accumulated
// serially in a fixed order.
void set_max_threads(int n);
int max_threads();

// Runs fn(begin, end) over a partition of [0, n). With max_threads() == 1 (or
// tiny n) this is a single inline call.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace iat
