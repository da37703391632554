// Deterministic seeding and sampling utilities shared by all modules.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace revlab {

// splitmix64, the usual seed-sequence stand-in.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, purpose tag). Tagging keeps
// e.g. test-set selection independent of train-order shuffling.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
  uint64_t h = splitmix64(seed ^ 0x243f6a8885a308d3ull);
  for (char c : tag) h = splitmix64(h ^ static_cast<uint8_t>(c));
  return h;
}

inline std::mt19937_64 make_rng(uint64_t seed, std::string_view tag) {
  return std::mt19937_64(derive_seed(seed, tag));
}

// Uniform double in [0,1) with 53 random bits; avoids distribution objects
// whose output is implementation-defined.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Unbiased uniform integer in [0, n) via rejection.
inline uint64_t uniform_below(std::mt19937_64& rng, uint64_t n) {
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

template <typename T>
void shuffle_inplace(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = uniform_below(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace revlab
