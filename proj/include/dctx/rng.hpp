#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace dctx {

/// mt19937_64 with distributions computed from raw bits, so sequences are
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  double normal();
  /// Normal(0, sigma) resampled until within two standard deviations.
  double trunc_normal(double sigma);

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dctx
