#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mergeflow {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent seeds from a base seed
// plus stream/index tags so reruns are reproducible stream by stream.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(base ^ 0x6a09e667f3bcc908ULL);
  s = mix64(s ^ a);
  s = mix64(s ^ b);
  s = mix64(s ^ c);
  return s;
}

// Uniform in [0,1). The <random> distribution classes are implementation
// defined; these helpers keep draws bit-stable for a given engine stream.
inline double u01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * u01(rng);
}

inline int uniform_int(Rng& rng, int n) {  // [0, n)
  int k = static_cast<int>(u01(rng) * n);
  return k < n ? k : n - 1;
}

inline bool bernoulli(Rng& rng, double p) { return u01(rng) < p; }

// Knuth's algorithm; fine for the small rates used here (lambda < ~30).
inline int poisson(Rng& rng, double lambda) {
  if (lambda <= 0.0) return 0;
  const double limit = std::exp(-lambda);
  double prod = u01(rng);
  int k = 0;
  while (prod > limit) {
    ++k;
    prod *= u01(rng);
  }
  return k;
}

// Box-Muller, stateless (two uniforms per draw).
inline double normal(Rng& rng) {
  double u1 = 1.0 - u01(rng);  // (0,1]
  double u2 = u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace mergeflow
