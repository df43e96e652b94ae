#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace lmirt {

// mt19937_64 with hand-rolled variate transforms, so draws depend only on the
// engine (whose output the standard pins down) and not on library-specific
// distribution implementations.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  std::uint64_t next_u64() { return engine_(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Index drawn with probabilities proportional to the entries of weights.
  template <class Vec>
  int categorical(const Vec& weights) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) total += weights(i);
    double u = uniform() * total;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      u -= weights(i);
      if (u < 0.0) return static_cast<int>(i);
    }
    // Rounding left u marginally non-negative: fall back to the last positive weight.
    for (Eigen::Index i = weights.size() - 1; i >= 0; --i)
      if (weights(i) > 0.0) return static_cast<int>(i);
    return 0;
  }

  int integer(int n) { return static_cast<int>(uniform() * n); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lmirt
