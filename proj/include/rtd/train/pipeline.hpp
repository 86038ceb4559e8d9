#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "rtd/data/batching.hpp"
#include "rtd/model/model_pair.hpp"
#include "rtd/sampling/sampling.hpp"

namespace rtd::train {

// Which distribution replacements are drawn from. kPs on a baseline model means p_g.
enum class Scheme { kPg, kPs };
std::string_view scheme_name(Scheme s);
Scheme parse_scheme(std::string_view s);

struct PipelineSettings {
  double mask_frac = 0.15;
  int ngram_max = 3;
  Scheme scheme = Scheme::kPs;
  std::uint64_t seed = 0;
  // Mixed into every per-row key. Training passes the step index.
  std::uint64_t salt = 0;
};

struct PipelineResult {
  data::MaskedBatch masked;
  model::GeneratorOutput gen;
  std::vector<sampling::PositionProposal> proposals;  // one per masked position
  sampling::Replacement replacement;
  std::vector<TokenId> targets;             // x at each masked position
  std::vector<TokenId> sampled;             // x' at each masked position
  std::vector<std::uint8_t> is_original;    // per token: x^R == x
  std::vector<std::uint8_t> is_masked;      // per token
  model::DiscriminatorOutput disc;
};

// Content key of one row. Masks and draws for a row depend on (seed, salt, key)
// only, so neither batch composition nor row order changes them.
std::uint64_t row_key(std::span<const TokenId> tokens);

data::MaskedBatch mask_rows(const data::Batch& batch, double mask_frac, int ngram_max, std::uint64_t seed,
                            std::uint64_t salt);

// Sampling proposal at one masked position given its generator outputs.
sampling::PositionProposal make_proposal(model::Variant variant, Scheme scheme, std::span<const double> mlm_logits,
                                         std::span<const double> sampling_logits, TokenId original);

PipelineResult run_pipeline(const model::ModelPair& models, const data::Batch& batch, const PipelineSettings& settings,
                            Rng* dropout);

}  // namespace rtd::train
