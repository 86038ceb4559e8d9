#include "rtd/data/masking.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rtd/data/vocab.hpp"

namespace rtd::data {

std::size_t mask_count(std::size_t n, double mask_frac) {
  return static_cast<std::size_t>(std::ceil(mask_frac * static_cast<double>(n) - 1e-9));
}

std::vector<double> span_length_weights(int ngram_max) {
  RTD_REQUIRE(ngram_max >= 1, "ngram_max must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(ngram_max));
  double z = 0.0;
  for (int l = 1; l <= ngram_max; ++l) z += (w[static_cast<std::size_t>(l - 1)] = 1.0 / l);
  for (double& v : w) v /= z;
  return w;
}

namespace {

std::size_t draw_length(const std::vector<double>& weights, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    c += weights[i];
    if (u < c) return i + 1;
  }
  return weights.size();
}

}  // namespace

MaskedExample mask_sequence(std::span<const TokenId> x, double mask_frac, int ngram_max, Rng& rng) {
  const std::size_t n = x.size();
  RTD_REQUIRE(n >= 1, "mask_sequence: empty sequence");
  RTD_REQUIRE(mask_frac > 0.0 && mask_frac < 1.0, "mask_sequence: mask_frac must be in (0, 1)");
  RTD_REQUIRE(ngram_max >= 1, "mask_sequence: ngram_max must be >= 1");
  const std::size_t k = mask_count(n, mask_frac);
  if (k >= n) {
    throw SequenceTooShort("sequence of length " + std::to_string(n) + " too short to mask " + std::to_string(k) +
                           " tokens");
  }

  MaskedExample ex;
  ex.original.assign(x.begin(), x.end());
  std::vector<std::uint8_t> masked(n, 0);

  if (ngram_max == 1) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(idx[i], idx[i + rng.below(n - i)]);
      masked[idx[i]] = 1;
      ex.spans.push_back({idx[i], 1, 1});
    }
  } else {
    const auto weights = span_length_weights(ngram_max);
    constexpr int kMaxAttempts = 64;
    std::size_t remaining = k;
    while (remaining > 0) {
      const std::size_t drawn = draw_length(weights, rng);
      std::size_t len = std::min(drawn, remaining);
      bool placed = false;
      std::size_t start = 0;
      for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
        start = rng.below(n - len + 1);
        placed = std::none_of(masked.begin() + static_cast<std::ptrdiff_t>(start),
                              masked.begin() + static_cast<std::ptrdiff_t>(start + len), [](auto m) { return m != 0; });
      }
      if (!placed) {
        // Crowded sequence: fall back to a single free position.
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < n; ++i) {
          if (!masked[i]) free.push_back(i);
        }
        start = free[rng.below(free.size())];
        len = 1;
      }
      std::fill_n(masked.begin() + static_cast<std::ptrdiff_t>(start), len, 1);
      ex.spans.push_back({start, len, drawn});
      remaining -= len;
    }
  }

  ex.corrupted = ex.original;
  for (std::size_t i = 0; i < n; ++i) {
    if (masked[i]) {
      ex.positions.push_back(i);
      ex.corrupted[i] = kMask;
    }
  }
  return ex;
}

}  // namespace rtd::data
