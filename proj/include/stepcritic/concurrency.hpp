#pragma once

#include <atomic>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stepcritic::concurrency {

// Counting semaphore with a runtime limit (std::counting_semaphore needs the
// ceiling at compile time). Used to cap in-flight requests per endpoint.
class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

struct SemaphoreGuard {
  explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;
  Semaphore& sem;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results land at
// their input index, so output order never depends on scheduling. The first
// exception (by item index) is rethrown after all workers drain. When
// `cancel` is set, remaining items are skipped (already-started ones finish).
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn,
                  const std::atomic<bool>* cancel = nullptr) {
  if (n == 0) return;
  const int thread_count = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (thread_count == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      if (cancel && cancel->load()) break;
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(thread_count);
  for (int t = 0; t < thread_count; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        if (cancel && cancel->load()) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace stepcritic::concurrency
