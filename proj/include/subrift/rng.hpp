#pragma once

#include <cmath>
#include <cstdint>

namespace subrift {

namespace detail {
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based generator: each (seed, stream) pair is an independent,
// platform-stable substream. Gaussians are produced by Box-Muller on the raw
// 64-bit counter output, so sequences are bit-identical across runs and
// independent of how work is split over threads.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream) {
    uint64_t s = stream;
    uint64_t mixed = detail::splitmix64(s);
    state_ = seed ^ mixed;
    // burn-in decorrelates nearby (seed, stream) pairs
    detail::splitmix64(state_);
  }

  uint64_t next_u64() { return detail::splitmix64(state_); }

  // uniform on (0,1)
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace subrift
