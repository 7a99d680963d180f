#include "hecnn/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hecnn {

int worker_count() {
  if (const char* env = std::getenv("HECNN_WORKERS")) {
    try {
      const int value = std::stoi(env);
      if (value >= 1) return value;
    } catch (const std::exception&) {
    }
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void parallel_for(std::size_t count, OpLedger& ledger,
                  const std::function<void(std::size_t, OpLedger&)>& body, int workers) {
  const std::size_t threads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i, ledger);
    return;
  }
  std::vector<OpLedger> forks;
  for (std::size_t w = 0; w < threads; ++w) forks.push_back(ledger.fork());
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      try {
        for (std::size_t i = begin; i < end; ++i) body(i, forks[w]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& fork : forks) ledger.merge(fork);
  if (failure) std::rethrow_exception(failure);
}

void parallel_for(std::size_t count, OpLedger& ledger,
                  const std::function<void(std::size_t, OpLedger&)>& body) {
  parallel_for(count, ledger, body, worker_count());
}

}  // namespace hecnn
