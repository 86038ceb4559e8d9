#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rtd/core/rng.hpp"
#include "rtd/core/tensor.hpp"
#include "rtd/data/vocab.hpp"

namespace rtd::data {

// Row-major [rows x max_len] token block. Padding positions carry PAD and
// valid == 0; they are excluded from attention keys and from every loss.
struct Batch {
  std::size_t max_len = 0;
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> valid;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> example_index;

  std::size_t rows() const { return lengths.size(); }
  std::size_t tokens() const { return ids.size(); }
  std::size_t valid_count() const;
};

struct MaskedBatch {
  Batch batch;
  std::vector<TokenId> corrupted;           // c, same layout as batch.ids
  std::vector<std::size_t> mask_positions;  // flat indices row * max_len + t, ascending
};

// Builds one batch from the given example indices, truncating to max_len.
Batch make_batch(std::span<const std::vector<TokenId>> examples, std::span<const std::size_t> indices,
                 std::size_t max_len);

// Deterministic shuffle of the example order under `rng`, then consecutive
// groups of batch_size (the last one may be smaller).
std::vector<Batch> make_batches(std::span<const std::vector<TokenId>> examples, std::size_t batch_size,
                                std::size_t max_len, Rng& rng);

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

// Masks every row independently (rows drawn in order from `rng`).
MaskedBatch mask_batch(const Batch& batch, double mask_frac, int ngram_max, Rng& rng);

// Stateless batch source: the batch for a global step depends only on
// (examples, batch_size, max_len, seed, step), which makes resume exact.
class BatchStream {
 public:
  BatchStream(std::vector<std::vector<TokenId>> examples, std::size_t batch_size, std::size_t max_len,
              std::uint64_t seed);

  std::size_t batches_per_epoch() const;
  Batch at_step(std::int64_t step) const;
  std::size_t size() const { return examples_.size(); }
  const std::vector<std::vector<TokenId>>& examples() const { return examples_; }

 private:
  std::vector<std::vector<TokenId>> examples_;
  std::size_t batch_size_;
  std::size_t max_len_;
  std::uint64_t seed_;
};

struct PreparedCorpus {
  std::vector<std::vector<TokenId>> sequences;
  std::size_t documents = 0;
  std::size_t skipped_short = 0;  // chunks where ceil(mask_frac * n) >= n
};

// Tokenizes each document (one per line), splits it into chunks of at most
// max_len tokens and drops chunks too short to mask.
PreparedCorpus prepare_sequences(std::span<const std::string> documents, const Vocab& vocab, std::size_t max_len,
                                 double mask_frac);

// One document per line; blank lines are ignored. DataError names the path.
std::vector<std::string> read_corpus(const std::string& path);

}  // namespace rtd::data
