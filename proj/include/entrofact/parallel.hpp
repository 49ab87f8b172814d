#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace entrofact {

// Process-wide worker cap, settable from the CLI (--workers).
inline int& worker_count() {
  static int workers = static_cast<int>(std::thread::hardware_concurrency());
  return workers;
}

// Runs fn(i) for i in [0, n). Work items must be independent; any shared
// output must be written to per-index slots so that results do not depend
// on the number of workers.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int workers = worker_count() > 0 ? worker_count() : 1;
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int spawn = std::min<std::size_t>(workers, n) - 1;
  pool.reserve(spawn);
  for (int t = 0; t < spawn; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
}

}  // namespace entrofact
