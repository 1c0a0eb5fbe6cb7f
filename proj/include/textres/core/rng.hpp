#pragma once

#include <cstdint>
#include <string_view>

#include "textres/core/tensor.hpp"

namespace textres {

struct Seed {
  std::uint64_t value = 0;
  bool operator==(const Seed&) const = default;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based stream keyed by (seed, stage, item). Two streams with the
/// same key produce the same sequence regardless of what other streams did.
class Rng {
 public:
  Rng(Seed seed, std::string_view stage, std::uint64_t item = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  Tensor normal_tensor(std::vector<int> shape, double stddev = 1.0);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace textres
