#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace spoc {

/// Runs f(i) for i in [0, n) on up to `threads` workers with a static block
/// partition. Each index must write only to its own output slot; callers
/// reduce afterwards in index order, so results never depend on `threads`.
/// The exception thrown at the lowest index wins, again for determinism.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::size_t> failed_at(workers, n);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        const std::size_t begin = t * n / workers;
        const std::size_t end = (t + 1) * n / workers;
        for (std::size_t i = begin; i < end; ++i) {
          try {
            f(i);
          } catch (...) {
            errors[t] = std::current_exception();
            failed_at[t] = i;
            return;
          }
        }
      });
    }
  }
  std::size_t first = workers;
  for (std::size_t t = 0; t < workers; ++t) {
    if (errors[t] && (first == workers || failed_at[t] < failed_at[first])) first = t;
  }
  if (first != workers) std::rethrow_exception(errors[first]);
}

}  // namespace spoc
