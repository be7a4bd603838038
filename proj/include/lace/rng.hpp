#pragma once

// Seeded random streams. std::normal_distribution and std::shuffle are
// implementation-defined, so Gaussian draws use Box-Muller on top of the
// fully specified mt19937_64 engine to keep results identical across
// standard libraries.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

namespace lace {

inline constexpr const char* kRngAlgorithm = "mt19937_64/box-muller";

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  void fill_normal(std::span<double> out) {
    for (double& v : out) v = normal();
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream for the k-th independent work item of a seeded job.
inline Rng stream(std::uint64_t seed, std::uint64_t k) { return Rng(seed + k); }

}  // namespace lace
