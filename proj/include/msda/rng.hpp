#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace msda {

// Counter-based stream RNG. Every consumer derives its own stream from
// (seed, labels...) so that trials, targets and scans draw from disjoint,
// reproducible sequences regardless of evaluation order or threading.
//
// The generator is a splitmix64 walk; distributions are implemented
// explicitly (Box-Muller, Knuth Poisson) so output is identical across
// platforms and standard libraries.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t stream_key(uint64_t seed, std::initializer_list<uint64_t> labels) {
  uint64_t h = seed ^ 0xa0761d6478bd642fULL;
  for (uint64_t label : labels) {
    h ^= label + 0x8da6b343ec53f65bULL;
    (void)splitmix64(h);
    h = splitmix64(h);
  }
  return h;
}

class StreamRng {
 public:
  explicit StreamRng(uint64_t key) : state_(key) {}
  StreamRng(uint64_t seed, std::initializer_list<uint64_t> labels)
      : state_(stream_key(seed, labels)) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Knuth's product method; fine for the small means used here.
  int next_poisson(double mean) {
    if (mean <= 0.0) return 0;
    double limit = std::exp(-mean);
    double prod = next_unit();
    int k = 0;
    while (prod > limit) {
      prod *= next_unit();
      ++k;
    }
    return k;
  }

  int next_index(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace msda
