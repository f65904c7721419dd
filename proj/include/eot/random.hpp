#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "eot/tensor.hpp"

namespace eot {

// splitmix64; used to fold (seed, epoch, index, ...) tuples into stream seeds
// so that per-example randomness is independent of iteration order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fold_seed(std::uint64_t a) { return mix64(a); }

template <typename... Rest>
std::uint64_t fold_seed(std::uint64_t a, Rest... rest) {
  return mix64(a ^ (fold_seed(static_cast<std::uint64_t>(rest)...) + 0x9e3779b97f4a7c15ULL));
}

// mt19937_64 engine with hand-rolled draws. The standard distributions are
// implementation-defined, so this keeps generated values identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::uint64_t index(std::uint64_t n) {
    // modulo rejection to stay unbiased
    const std::uint64_t limit = n * ((~std::uint64_t(0)) / n);
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void fill_uniform(Tensor<T>& t, double lo, double hi) {
    for (auto& v : t) v = static_cast<T>(uniform(lo, hi));
  }

  template <typename T>
  void fill_normal(Tensor<T>& t, double mean, double stddev) {
    for (auto& v : t) v = static_cast<T>(mean + stddev * normal());
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[index(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace eot
