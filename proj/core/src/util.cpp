#include "blockstate/util.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <system_error>
#include <thread>
#include <vector>

namespace blockstate {

int worker_count(int requested, bool deterministic) {
  if (deterministic) return 1;
  int n = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* cap = std::getenv("BLOCKSTATE_THREADS")) {
    int c = std::atoi(cap);
    if (c >= 1 && c < n) n = c;
  }
  return n;
}

void parallel_chunks(std::size_t n, int workers,
                     const std::function<void(std::size_t, std::size_t, int)>& fn) {
  if (n == 0) return;
  if (workers < 1) workers = 1;
  const std::size_t w = std::min<std::size_t>(workers, n);
  if (w == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(w);
  const std::size_t chunk = (n + w - 1) / w;
  for (std::size_t t = 0; t < w; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back(fn, begin, end, static_cast<int>(t));
  }
  for (auto& th : threads) th.join();
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::general, 17);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  fs::path dir = path.parent_path();
  if (dir.empty()) dir = ".";
  fs::path tmp = dir / (path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace blockstate
