#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace sbmsel {

// splitmix64 step; used only to spread seeds, not as the working generator.
inline std::uint64_t splitmix64(std::uint64_t state) {
  std::uint64_t z = state + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Independent stream seed for (master, stream). Distinct streams decorrelate
// even for adjacent master seeds.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master + (stream + 1) * 0x9E3779B97F4A7C15ULL);
}

// Uniform in [0, 1) with 53 random bits; bit-stable across platforms, unlike
// std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace detail {
// CDF inversion for small means; exact given a perfect uniform.
inline std::int64_t poisson_small(std::mt19937_64& rng, double mu) {
  if (mu <= 0.0) return 0;
  double p = std::exp(-mu);
  double cdf = p;
  double u = uniform01(rng);
  std::int64_t k = 0;
  // cap guards the probability-zero event that u exceeds the representable CDF
  while (u > cdf && k < 2000) {
    ++k;
    p *= mu / static_cast<double>(k);
    cdf += p;
  }
  return k;
}
}  // namespace detail

// Exact Poisson sampler: splits the mean into chunks small enough for stable
// CDF inversion and sums the (independent, hence jointly Poisson) draws.
// Portable: uses only uniform01 draws in a fixed order, so results are
// identical across standard libraries, unlike std::poisson_distribution.
inline std::int64_t poisson_draw(std::mt19937_64& rng, double mean) {
  if (mean < 0.0 || !std::isfinite(mean)) {
    throw std::invalid_argument("poisson mean must be finite and nonnegative");
  }
  std::int64_t total = 0;
  while (mean > 12.0) {
    total += detail::poisson_small(rng, 12.0);
    mean -= 12.0;
  }
  return total + detail::poisson_small(rng, mean);
}

// Walker alias table: O(1) draws from a fixed discrete distribution.
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> weights) {
    const std::size_t n = weights.size();
    if (n == 0) throw std::invalid_argument("alias table needs weights");
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0 || !std::isfinite(w)) {
        throw std::invalid_argument("alias weights must be finite and nonnegative");
      }
      total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("alias weights must not all be zero");
    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::int32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::int32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      std::int32_t s = small.back();
      std::int32_t l = large.back();
      small.pop_back();
      large.pop_back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      (scaled[l] < 1.0 ? small : large).push_back(l);
    }
    for (std::int32_t i : large) prob_[i] = 1.0;
    for (std::int32_t i : small) prob_[i] = 1.0;  // rounding leftovers
  }

  std::int32_t sample(std::mt19937_64& rng) const {
    const auto n = static_cast<std::uint64_t>(prob_.size());
    auto i = static_cast<std::size_t>(rng() % n);
    return uniform01(rng) < prob_[i] ? static_cast<std::int32_t>(i) : alias_[i];
  }

  std::size_t size() const { return prob_.size(); }

 private:
  std::vector<double> prob_;
  std::vector<std::int32_t> alias_;
};

}  // namespace sbmsel
