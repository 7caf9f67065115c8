#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace sfoda {

// Seeded random stream. Each consumer owns one; streams are never shared
// across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  // Derives an independent stream for a named sub-task.
  Rng split(std::uint64_t salt) {
    std::seed_seq seq{engine_(), salt};
    std::mt19937_64 child(seq);
    return Rng(child());
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sfoda
