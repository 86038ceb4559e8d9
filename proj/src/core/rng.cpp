#include "rtd/core/rng.hpp"

#include <cmath>
#include <numbers>

#include "rtd/core/errors.hpp"

namespace rtd {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed, Stream stream, std::uint64_t substream)
    : key_(mix64(mix64(seed + kGolden) ^ mix64(static_cast<std::uint64_t>(stream) * 0xD1B54A32D192ED03ULL) ^
                 mix64(substream * 0x8CB92BA72F3D8DD7ULL + 1))),
      counter_(0) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
}

std::size_t Rng::below(std::size_t n) {
  RTD_REQUIRE(n > 0, "Rng::below requires n > 0");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return static_cast<std::size_t>(r % bound);
  }
}

double Rng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double stddev, double bound) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= bound) return z * stddev;
  }
}

Rng Rng::fork(std::uint64_t sub) const { return Rng(mix64(key_ ^ mix64(sub + 0x632BE59BD9B4E019ULL)), 0); }

}  // namespace rtd
