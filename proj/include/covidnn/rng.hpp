#pragma once

#include <cstdint>
#include <iterator>
#include <stdexcept>
#include <utility>

namespace covidnn {

// SplitMix64 (Steele, Lea, Flood 2014). The generator and every derived draw
// below are frozen so that a given seed produces the identical stream on any
// platform or standard library. Do not swap in std::mt19937 or
// std::uniform_*_distribution: their outputs are not pinned by the standard.
class SeededRng {
public:
  explicit SeededRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("SeededRng::uniform: lo > hi");
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, n). Rejection-free multiply-shift would bias less
  // for astronomically large n; plain modulo is fine for index ranges and is
  // simpler to keep bit-stable.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng::next_below: n == 0");
    return next_u64() % n;
  }

  // Fisher-Yates. std::shuffle is unspecified across implementations.
  template <typename RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    auto n = static_cast<std::uint64_t>(std::distance(first, last));
    for (std::uint64_t i = n; i > 1; --i) {
      std::uint64_t j = next_below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

private:
  std::uint64_t state_;
};

}  // namespace covidnn
