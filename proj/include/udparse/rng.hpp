// Deterministic pseudo-random primitives. The <random> distributions are
// not pinned across standard-library implementations, so anything that has
// to reproduce byte-for-byte (shuffles, synthetic embeddings, parameter
// init) goes through these instead.
#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace udparse {

// Finalizer from the splitmix64 generator.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over raw bytes.
inline std::uint64_t hash_bytes(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Maps 64 random bits to a double in [0, 1).
inline double unit_from_bits(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_unit() { return unit_from_bits(next()); }

  // Uniform in [lo, hi).
  double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n). Modulo bias is irrelevant at the sizes used
  // here; determinism is what matters.
  std::uint64_t next_below(std::uint64_t n) { return n <= 1 ? 0 : next() % n; }

 private:
  std::uint64_t state_;
};

// Fisher-Yates with the given stream.
template <class T>
void deterministic_shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace udparse
