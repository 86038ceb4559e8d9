#include "rtd/data/batching.hpp"

#include <algorithm>
#include <fstream>

#include "rtd/core/errors.hpp"
#include "rtd/data/masking.hpp"

namespace rtd::data {

std::size_t Batch::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += v;
  return n;
}

Batch make_batch(std::span<const std::vector<TokenId>> examples, std::span<const std::size_t> indices,
                 std::size_t max_len) {
  RTD_REQUIRE(max_len >= 1, "make_batch: max_len must be >= 1");
  Batch b;
  b.max_len = max_len;
  b.ids.assign(indices.size() * max_len, kPad);
  b.valid.assign(indices.size() * max_len, 0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    RTD_REQUIRE(indices[r] < examples.size(), "make_batch: example index out of range");
    const auto& ex = examples[indices[r]];
    const std::size_t n = std::min(ex.size(), max_len);
    std::copy_n(ex.begin(), n, b.ids.begin() + static_cast<std::ptrdiff_t>(r * max_len));
    std::fill_n(b.valid.begin() + static_cast<std::ptrdiff_t>(r * max_len), n, 1);
    b.lengths.push_back(n);
    b.example_index.push_back(indices[r]);
  }
  return b;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::vector<Batch> make_batches(std::span<const std::vector<TokenId>> examples, std::size_t batch_size,
                                std::size_t max_len, Rng& rng) {
  RTD_REQUIRE(batch_size >= 1, "make_batches: batch_size must be >= 1");
  const auto order = shuffled_indices(examples.size(), rng);
  std::vector<Batch> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    out.push_back(make_batch(examples, std::span(order).subspan(i, end - i), max_len));
  }
  return out;
}

MaskedBatch mask_batch(const Batch& batch, double mask_frac, int ngram_max, Rng& rng) {
  MaskedBatch mb;
  mb.batch = batch;
  mb.corrupted = batch.ids;
  const std::size_t L = batch.max_len;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const std::size_t n = batch.lengths[r];
    const auto ex = mask_sequence(std::span(batch.ids).subspan(r * L, n), mask_frac, ngram_max, rng);
    for (std::size_t p : ex.positions) {
      mb.mask_positions.push_back(r * L + p);
      mb.corrupted[r * L + p] = kMask;
    }
  }
  return mb;
}

BatchStream::BatchStream(std::vector<std::vector<TokenId>> examples, std::size_t batch_size, std::size_t max_len,
                         std::uint64_t seed)
    : examples_(std::move(examples)), batch_size_(batch_size), max_len_(max_len), seed_(seed) {
  RTD_REQUIRE(batch_size_ >= 1, "BatchStream: batch_size must be >= 1");
  if (examples_.empty()) throw DataError("no usable training sequences");
}

std::size_t BatchStream::batches_per_epoch() const { return (examples_.size() + batch_size_ - 1) / batch_size_; }

Batch BatchStream::at_step(std::int64_t step) const {
  RTD_REQUIRE(step >= 0, "BatchStream: negative step");
  const auto bpe = static_cast<std::int64_t>(batches_per_epoch());
  const std::int64_t epoch = step / bpe;
  const auto slot = static_cast<std::size_t>(step % bpe);
  Rng rng(seed_, Stream::kShuffle, static_cast<std::uint64_t>(epoch));
  const auto order = shuffled_indices(examples_.size(), rng);
  const std::size_t begin = slot * batch_size_;
  const std::size_t end = std::min(order.size(), begin + batch_size_);
  return make_batch(examples_, std::span(order).subspan(begin, end - begin), max_len_);
}

PreparedCorpus prepare_sequences(std::span<const std::string> documents, const Vocab& vocab, std::size_t max_len,
                                 double mask_frac) {
  RTD_REQUIRE(max_len >= 1, "prepare_sequences: max_len must be >= 1");
  PreparedCorpus out;
  for (const auto& doc : documents) {
    const auto ids = vocab.encode(doc);
    if (ids.empty()) continue;
    ++out.documents;
    for (std::size_t i = 0; i < ids.size(); i += max_len) {
      const std::size_t n = std::min(max_len, ids.size() - i);
      if (mask_count(n, mask_frac) >= n) {
        ++out.skipped_short;
        continue;
      }
      out.sequences.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(i),
                                 ids.begin() + static_cast<std::ptrdiff_t>(i + n));
    }
  }
  return out;
}

std::vector<std::string> read_corpus(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read corpus '" + path + "'");
  std::vector<std::string> docs;
  for (std::string line; std::getline(f, line);) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) docs.push_back(std::move(line));
  }
  if (docs.empty()) throw DataError("corpus '" + path + "' is empty");
  return docs;
}

}  // namespace rtd::data
