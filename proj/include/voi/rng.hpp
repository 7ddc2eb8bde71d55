#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

// Seed derivation and portable distributions. Every stochastic draw in the
// toolkit flows through a named stream so that coupled experiments can hold
// all but one stream fixed. Distributions are hand-rolled on top of
// mt19937_64 (whose output sequence is pinned by the standard) because the
// std distribution algorithms are implementation-defined.
//
// Seed spec (documented for external reproduction):
//   h = FNV-1a64 over the little-endian bytes of
//       (root_seed, stream_id, process_index, replication)
//   seed = splitmix64_finalize(h)

namespace voi {

enum class Stream : std::uint64_t {
  arrivals = 1,
  observation = 2,
  process_noise = 3,
  channel = 4,
  policy = 5,
  access = 6,   // u1 selection in the multi-process engine
  spsa = 7,
  instance_gen = 8,
};

namespace detail {

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64_u64(std::uint64_t v, std::uint64_t h) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a64(b, 8, h);
}

inline std::uint64_t splitmix64_finalize(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t root_seed, Stream stream,
                                 std::uint64_t process_index = 0,
                                 std::uint64_t replication = 0) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = detail::fnv1a64_u64(root_seed, h);
  h = detail::fnv1a64_u64(static_cast<std::uint64_t>(stream), h);
  h = detail::fnv1a64_u64(process_index, h);
  h = detail::fnv1a64_u64(replication, h);
  return detail::splitmix64_finalize(h);
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller, two uniforms per sample, no cached spare.
  double gaussian() {
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 < 1
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [0, n), rejection sampled.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  // Uniform double on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace voi
