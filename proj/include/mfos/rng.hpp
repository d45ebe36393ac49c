#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mfos/errors.hpp"

namespace mfos {

// splitmix64 finalizer; used to derive independent seeds from (root, stream).
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t root, uint64_t stream) {
  return mix64(root ^ mix64(stream + 0x51'7c'c1'b7'27'22'0a'95ULL));
}

// mt19937_64 source with hand-rolled distributions so that results do not
// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds, rejection sampled
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) fail(ErrorKind::InvalidArgument, "uniform_int: hi < lo");
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(u64());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t v;
    do {
      v = u64();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % range);
  }

  // Box-Muller with a cached spare
  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  // normal truncated to +-2 stddev
  double trunc_normal(double stddev) {
    double v;
    do {
      v = normal(0.0, stddev);
    } while (std::abs(v) > 2.0 * stddev);
    return v;
  }

  // k distinct indices from [0, n), order of selection
  std::vector<int> sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) fail(ErrorKind::InvalidArgument, "sample_without_replacement: bad k");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
      int j = static_cast<int>(uniform_int(i, n - 1));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mfos
