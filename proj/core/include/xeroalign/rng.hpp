#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace xeroalign {

// Distributions are implemented here rather than taken from <random> so
// that seeded streams are identical across standard library vendors.
class Rng {
 public:
  // Independent stream for `seed`, keyed by a path of stream ids.
  explicit Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {});

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();
  // N(0, stddev^2) resampled until within +-bound_sigmas * stddev.
  double truncated_normal(double stddev, double bound_sigmas = 2.0);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

}  // namespace xeroalign
