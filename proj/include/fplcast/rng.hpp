#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fplcast {

// 64-bit FNV-1a, used to derive stable per-item seeds from text keys.
std::uint64_t fnv1a(std::string_view text,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt);

// std::mt19937_64 is bit-exact across standard libraries but the std
// distributions are not, so the draws are implemented here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t n);  // [0, n)
  double normal();
  int poisson(double mean);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fplcast
