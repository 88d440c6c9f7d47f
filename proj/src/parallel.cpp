#include "hemocnn/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hemocnn {

std::size_t worker_count() {
  static const std::size_t cached = [] {
    if (const char* env = std::getenv("HEMOCNN_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<std::size_t>(hw == 0 ? 1 : hw);
  }();
  return cached;
}

void parallel_for(std::size_t n, std::size_t min_per_worker,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  min_per_worker = std::max<std::size_t>(1, min_per_worker);
  const std::size_t workers =
      std::min(worker_count(), std::max<std::size_t>(1, n / min_per_worker));
  if (workers <= 1) {
    fn(0, n);
    return;
  }

  const std::size_t chunk = (n + workers - 1) / workers;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto guarded = [&](std::size_t begin, std::size_t end) {
    try {
      fn(begin, end);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t begin = chunk; begin < n; begin += chunk) {
    pool.emplace_back(guarded, begin, std::min(begin + chunk, n));
  }
  guarded(0, std::min(chunk, n));
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace hemocnn
