#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace rgrl {

/// splitmix64 finalizer; used to derive independent stream seeds from one base seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Stable 64-bit tag for a named stream ("layout", "tasks", ...).
std::uint64_t stream_tag(std::string_view name);

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return mix_seed(seed, stream_tag(name));
}

/// Thin wrapper over mt19937_64 with hand-rolled variates so that draws are
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_open(); }

  /// Uniform integer in [lo, hi] (inclusive).
  int uniform_int(int lo, int hi);

  double exponential() { return -std::log(uniform_open()); }
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rgrl
