#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace kfp {

inline int resolve_workers(int workers) {
  if (workers > 0) return workers;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Splits [0, n) into `chunks` contiguous ranges and runs body(chunk, begin, end)
/// on up to `workers` threads. The first exception thrown by any chunk is rethrown.
template <class Body>
void parallel_chunks(long long n, int chunks, int workers, Body&& body) {
  chunks = static_cast<int>(std::max<long long>(1, std::min<long long>(chunks, n)));
  workers = std::min(resolve_workers(workers), chunks);
  auto range = [&](int c) {
    return std::pair<long long, long long>{n * c / chunks, n * (c + 1) / chunks};
  };
  if (workers <= 1) {
    for (int c = 0; c < chunks; ++c) {
      auto [b, e] = range(c);
      body(c, b, e);
    }
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int c = w; c < chunks; c += workers) {
        try {
          auto [b, e] = range(c);
          body(c, b, e);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace kfp
