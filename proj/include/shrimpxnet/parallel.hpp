#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sxn {

namespace detail {

inline int resolve_thread_count_from_env() {
  const char* env = std::getenv("SHRIMPXNET_THREADS");
  long requested = 0;
  if (env != nullptr && *env != '\0') {
    requested = std::strtol(env, nullptr, 10);
  }
  if (requested <= 0) {
    requested = static_cast<long>(std::thread::hardware_concurrency());
    if (requested <= 0) requested = 1;
  }
  if (requested > 64) requested = 64;
  return static_cast<int>(requested);
}

// Work items are half-open index ranges produced by a static partition,
// so a given task always sees the same ranges no matter which worker
// executes them.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int size() {
    std::lock_guard<std::mutex> lock(config_mutex_);
    return threads_;
  }

  void set_size(int n) {
    std::lock_guard<std::mutex> lock(config_mutex_);
    threads_ = n <= 0 ? resolve_thread_count_from_env() : (n > 64 ? 64 : n);
  }

  void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
    if (n <= 0) return;
    int workers = size();
    if (workers > n) workers = static_cast<int>(n);
    if (workers <= 1) {
      body(0, n);
      return;
    }

    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> crew;
    crew.reserve(static_cast<std::size_t>(workers) - 1);
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto guarded = [&](std::int64_t begin, std::int64_t end) {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    };

    for (int w = 1; w < workers; ++w) {
      const std::int64_t begin = chunk * w;
      const std::int64_t end = begin + chunk < n ? begin + chunk : n;
      if (begin >= end) break;
      crew.emplace_back(guarded, begin, end);
    }
    guarded(0, chunk < n ? chunk : n);
    for (auto& t : crew) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

 private:
  ThreadPool() : threads_(resolve_thread_count_from_env()) {}

  std::mutex config_mutex_;
  int threads_;
};

}  // namespace detail

inline int thread_count() { return detail::ThreadPool::instance().size(); }

// n <= 0 restores the SHRIMPXNET_THREADS / hardware default.
inline void set_thread_count(int n) { detail::ThreadPool::instance().set_size(n); }

// Runs body over [0, n) split into per-worker half-open ranges. The
// partition depends only on n and the configured worker count, so any
// computation whose ranges write disjoint outputs is bit-reproducible.
inline void parallel_for(std::int64_t n,
                         const std::function<void(std::int64_t, std::int64_t)>& body) {
  detail::ThreadPool::instance().run(n, body);
}

}  // namespace sxn
