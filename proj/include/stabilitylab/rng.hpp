#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace stabilitylab {

// Named sub-streams of the root seed. Every stochastic operation draws from
// an engine seeded by (root, stream, indices...), so any (qubit, cycle,
// session) cell can be regenerated in isolation and reordering the outer
// loops cannot change results.
enum class Stream : std::uint64_t {
  qubit_init = 1,
  bath_init = 2,
  thermal_cycle = 3,
  bath_advance = 4,
  arch_scan = 5,
  t1_session = 6,
  spectrogram = 7,
  calibration = 8,
  fresh_bath = 9,
};

// splitmix64 finalizer; full-period mixing of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix64(root);
  for (std::uint64_t t : tags) s = mix64(s ^ mix64(t));
  return s;
}

inline std::uint64_t derive_seed(std::uint64_t root, Stream stream,
                                 std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  return derive_seed(root, {static_cast<std::uint64_t>(stream), a, b, c});
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

// Log-uniform draw on [lo, hi], lo > 0.
inline double log_uniform(std::mt19937_64& eng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(eng));
}

}  // namespace stabilitylab
