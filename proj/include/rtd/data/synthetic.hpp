#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rtd::data {

// Topic-structured English-like text from a small probabilistic grammar.
// Documents stay on one topic, content words follow a Zipf law within each
// lexicon, and agreement / fixed collocations give the MLM some positions it
// can predict with near certainty and others it cannot.
struct SyntheticCorpusConfig {
  std::size_t documents = 2000;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 8;
  // Single small topic; total vocabulary (with specials) stays under 64 so
  // exhaustive per-candidate analyses are affordable.
  bool micro = false;
};

std::vector<std::string> generate_corpus(const SyntheticCorpusConfig& cfg, std::uint64_t seed);

}  // namespace rtd::data
