#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace hemocnn {

// splitmix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed ^ mix_seed(stream));
}

// Deterministic RNG on top of std::mt19937_64. The standard pins down the
// engine output but not the library distributions, so uniform/bernoulli/
// shuffle are hand-rolled here; a given seed produces the same stream on any
// conforming toolchain.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_bits() { return engine_(); }

  // uniform in [0, 1) with 53 random bits
  double uniform01() { return static_cast<double>(next_bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // draw in [0, n) via multiply-shift
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_bits()) * n) >> 64);
  }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  void reseed(std::uint64_t seed) { engine_.seed(seed); }

private:
  std::mt19937_64 engine_;
};

}  // namespace hemocnn
