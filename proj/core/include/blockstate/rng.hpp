#ifndef BLOCKSTATE_RNG_HPP
#define BLOCKSTATE_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace blockstate {

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// that streams are bit-identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Independent stream derived from (seed, tag), e.g. epoch shuffling uses a
  // different tag than parameter initialization.
  static Rng stream(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t x = seed ^ (tag + 0x9e3779b97f4a7c15ULL);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return Rng(x);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, unbiased.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = gen_();
      if (r >= threshold) return r % n;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[bounded(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace blockstate

#endif
