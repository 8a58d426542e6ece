#pragma once

#include <cstddef>
#include <functional>

namespace crreg {

// Fixed chunk size so the chunk decomposition (and therefore every
// reduction order) is independent of the thread count.
inline constexpr std::size_t kChunkSize = 8192;

std::size_t chunk_count(std::size_t n);

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed-size chunks.
// Chunks may execute on any thread in any order; callers that reduce must
// write per-chunk partials and combine them in chunk-index order.
void for_chunks(std::size_t n,
                const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace crreg
