#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gestalt {

// Mixes a root seed with a stage tag and an index. Every random stream in the
// pipeline is derived this way from the single root seed so that stages can
// be rerun independently.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  // Inclusive bounds.
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  bool coin() { return uniform_int(0, 1) == 1; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gestalt
