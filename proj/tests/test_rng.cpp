#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "rtd/core/rng.hpp"

using namespace rtd;

TEST_SUITE("rng") {
  TEST_CASE("same key gives the same sequence, different streams differ") {
    Rng a(42, Stream::kMasking, 3), b(42, Stream::kMasking, 3), c(42, Stream::kSampling, 3), d(42, Stream::kMasking, 4);
    bool differs_c = false, differs_d = false;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      differs_c |= x != c.next_u64();
      differs_d |= x != d.next_u64();
    }
    CHECK(differs_c);
    CHECK(differs_d);
  }

  TEST_CASE("uniform and below stay in range and are roughly flat") {
    Rng r(7, Stream::kAnalysis);
    std::vector<int> counts(10, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      const double o = r.uniform_open();
      REQUIRE(o > 0.0);
      REQUIRE(o < 1.0);
      ++counts[r.below(10)];
    }
    for (int c : counts) CHECK(std::abs(c - n / 10) < 5 * std::sqrt(n * 0.09));
  }

  TEST_CASE("normal moments and truncation bound") {
    Rng r(9, Stream::kInit);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal();
      s += x;
      s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
    for (int i = 0; i < 10000; ++i) CHECK(std::abs(r.truncated_normal(0.02)) <= 0.04);
  }

  TEST_CASE("fork does not advance the parent") {
    Rng a(1, Stream::kShuffle), b(1, Stream::kShuffle);
    Rng child = a.fork(5);
    (void)child.next_u64();
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.fork(5).next_u64() == b.fork(5).next_u64());
  }
}
