#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace nirstext {

// xoshiro256++ seeded through splitmix64. Self-contained so that streams are
// bit-identical across platforms and toolchains; std::mt19937 distributions
// are not portable across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), Lemire's unbiased bounded method. n > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (second draw cached).
  double normal();
  double normal(double mean, double sd);

  // In-place Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  // Sattolo's variant: permutation is a single n-cycle, hence a derangement
  // for any n >= 2.
  template <class T>
  void sattolo(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i - 1));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Stable sub-stream derivation: hashes (base, purpose, index) so that
// unrelated pipeline stages never share a stream even with equal base seeds.
std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose,
                          std::uint64_t index = 0);

}  // namespace nirstext
