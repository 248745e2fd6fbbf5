#pragma once

#include <cstdint>
#include <random>

namespace dipp {

// Seeded random stream. Every stochastic routine takes an Rng& so runs are
// reproducible from a single seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  int uniform_int(int upper_exclusive) {
    return std::uniform_int_distribution<int>(0, upper_exclusive - 1)(engine_);
  }

  // Independent child stream; stream ids keep sub-tasks decoupled.
  Rng split(std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(engine_()), static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32)};
    std::mt19937_64 child(seq);
    return Rng(child());
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace dipp
