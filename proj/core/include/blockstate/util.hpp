#ifndef BLOCKSTATE_UTIL_HPP
#define BLOCKSTATE_UTIL_HPP

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace blockstate {

// Resolves the worker count for parallel sections. `requested` 0 means "use
// hardware concurrency". The BLOCKSTATE_THREADS environment variable caps the
// result; deterministic mode forces a single worker.
int worker_count(int requested = 0, bool deterministic = false);

// Runs fn(begin, end, worker_index) over [0, n) split into contiguous chunks,
// one chunk per worker. With one worker, runs inline. Callers that reduce
// must combine per-worker results in worker-index order to stay reproducible
// for a fixed worker count.
void parallel_chunks(std::size_t n, int workers,
                     const std::function<void(std::size_t, std::size_t, int)>& fn);

// Locale-independent decimal formatting with 17 significant digits.
std::string format_double(double v);

// Writes content to path atomically (temp file in the same directory, then
// rename over the target).
void atomic_write(const std::filesystem::path& path, std::string_view content);

}  // namespace blockstate

#endif
