#pragma once

#include <cstddef>
#include <cstdint>

namespace rtd {

// Independent draw streams. Toggling one feature (e.g. dropout) never shifts
// the draws another stream produces.
enum class Stream : std::uint64_t {
  kInit = 1,
  kMasking = 2,
  kSampling = 3,
  kDropout = 4,
  kShuffle = 5,
  kAnalysis = 6,
  kCorpus = 7,
};

// Counter-based generator: draw i of (seed, stream, substream) is a pure
// function of those four integers, so results do not depend on platform
// library distributions.
class Rng {
 public:
  Rng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in (0, 1).
  double uniform_open();
  // Unbiased integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  double normal();
  // Normal(0, stddev) resampled until |x| <= bound * stddev.
  double truncated_normal(double stddev, double bound = 2.0);

  // Child stream keyed on this generator's key and `sub`; does not advance this one.
  Rng fork(std::uint64_t sub) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}
  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace rtd
