#include "crreg/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

#include "crreg/common.hpp"

namespace crreg {

namespace {
std::atomic<int> g_max_threads{0};
}

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }

int max_threads() {
  int n = g_max_threads.load();
  if (n == 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
  }
  return n;
}

std::size_t chunk_count(std::size_t n) { return (n + kChunkSize - 1) / kChunkSize; }

void for_chunks(std::size_t n,
                const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t nchunks = chunk_count(n);
  if (nchunks == 0) return;
  std::size_t nthreads = static_cast<std::size_t>(max_threads());
  if (nthreads > nchunks) nthreads = nchunks;
  if (nthreads <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c) {
      const std::size_t b = c * kChunkSize;
      fn(c, b, std::min(n, b + kChunkSize));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      const std::size_t b = c * kChunkSize;
      fn(c, b, std::min(n, b + kChunkSize));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nthreads - 1);
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace crreg
