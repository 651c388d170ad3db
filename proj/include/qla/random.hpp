#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace qla {

// mt19937_64's output sequence is fixed by the standard; the conversions below
// avoid the implementation-defined <random> distributions so seeded runs agree
// across standard libraries.

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a, for deriving seeds from names.
inline std::uint64_t hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Uniform on [0, 1).
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(gen) * static_cast<double>(n));
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 gen(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = uniform_index(gen, i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace qla
