#include "ulk/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ulk {
namespace {

std::atomic<int> g_override{0};

int env_workers() {
  const char* env = std::getenv("ULK_THREADS");
  if (env == nullptr) return 1;
  try {
    const int n = std::stoi(env);
    return n >= 1 ? n : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

}  // namespace

int worker_count() {
  const int forced = g_override.load();
  return forced >= 1 ? forced : env_workers();
}

void set_worker_count(int workers) { g_override.store(workers >= 1 ? workers : 0); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body) {
  if (n <= 0) return;
  const std::int64_t workers = std::min<std::int64_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (std::int64_t w = 0; w < workers; ++w) {
    const std::int64_t begin = n * w / workers;
    const std::int64_t end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::int64_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ulk
