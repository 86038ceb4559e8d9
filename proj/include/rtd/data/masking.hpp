#pragma once

#include <span>
#include <vector>

#include "rtd/core/errors.hpp"
#include "rtd/core/rng.hpp"
#include "rtd/core/tensor.hpp"

namespace rtd::data {

class SequenceTooShort : public DataError {
 public:
  using DataError::DataError;
};

struct MaskSpan {
  std::size_t start = 0;
  std::size_t length = 0;        // after truncation to the remaining budget
  std::size_t drawn_length = 0;  // as sampled from the span-length distribution
};

struct MaskedExample {
  std::vector<TokenId> original;      // x
  std::vector<std::size_t> positions; // m, sorted, distinct, 0-based
  std::vector<TokenId> corrupted;     // c = replace(x, m, MASK)
  std::vector<MaskSpan> spans;        // in draw order
};

// k = ceil(mask_frac * n), computed with a small tolerance so that products
// like 0.15 * 20 land on 3 rather than 4.
std::size_t mask_count(std::size_t n, double mask_frac);

// P(span length = l) proportional to 1/l for l in [1, ngram_max].
std::vector<double> span_length_weights(int ngram_max);

// Masks exactly k positions. ngram_max == 1 picks k distinct positions
// uniformly; larger values place non-overlapping spans with uniformly drawn
// starts (resampling a start that overlaps), truncating the last span to k.
// Throws SequenceTooShort when k >= n.
MaskedExample mask_sequence(std::span<const TokenId> x, double mask_frac, int ngram_max, Rng& rng);

}  // namespace rtd::data
