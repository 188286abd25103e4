#pragma once

// Deterministic RNG used everywhere in the project. All distributions are
// hand-rolled on top of mt19937_64 so that identical seeds produce identical
// streams regardless of standard-library implementation.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bidlab::nk {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed), seed_mix_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1)
  double uniform() {
    return double(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  // Box-Muller with a cached second draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Knuth's algorithm; fine for the small rates used here.
  int poisson(double lambda) {
    double limit = std::exp(-lambda);
    double p = 1.0;
    int k = 0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // Number of failures before first success, support {0, 1, 2, ...}.
  int geometric(double p) {
    double u = 0.0;
    while (u <= 0.0) u = uniform();
    return int(std::floor(std::log(u) / std::log(1.0 - p)));
  }

  // integer in [0, n)
  std::uint64_t randint(std::uint64_t n) {
    // rejection sampling for an unbiased draw
    std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = eng_();
    } while (v >= bound);
    return v % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = std::size_t(randint(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Sample k distinct indices from [0, n) without replacement.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(std::size_t(n), 0);
    for (int i = 0; i < n; ++i) idx[std::size_t(i)] = i;
    if (k >= n) return idx;
    // partial Fisher-Yates
    for (int i = 0; i < k; ++i) {
      int j = i + int(randint(std::uint64_t(n - i)));
      std::swap(idx[std::size_t(i)], idx[std::size_t(j)]);
    }
    idx.resize(std::size_t(k));
    return idx;
  }

  // Derive an independent stream for a sub-task.
  Rng split(std::uint64_t stream_id) const {
    return Rng(seed_mix_ ^ (0x9E3779B97F4A7C15ull * (stream_id + 1)));
  }

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_mix_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bidlab::nk
