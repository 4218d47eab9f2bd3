#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "exst/error.hpp"

namespace exst {

inline constexpr const char* kThreadsEnv = "EXST_THREADS";

/// Thread count: explicit request if positive, else EXST_THREADS, else 1.
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv(kThreadsEnv)) {
    try {
      int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string(kThreadsEnv) + " must be a positive integer");
  }
  return 1;
}

/// Runs f(i) for i in [0, n). Each index is processed exactly once; callers
/// write to disjoint slots and reduce afterwards in index order, so results
/// do not depend on the thread count. The first exception is rethrown.
template <typename F>
void parallel_for(long n, int threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr err;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      long i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int nt = static_cast<int>(std::min<long>(threads, n));
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace exst
