#include "rtd/train/pipeline.hpp"

#include <cmath>

#include "rtd/core/errors.hpp"
#include "rtd/data/masking.hpp"
#include "rtd/data/vocab.hpp"

namespace rtd::train {

std::string_view scheme_name(Scheme s) { return s == Scheme::kPg ? "pg" : "ps"; }

Scheme parse_scheme(std::string_view s) {
  if (s == "pg") return Scheme::kPg;
  if (s == "ps") return Scheme::kPs;
  throw ConfigError("unknown sampling scheme '" + std::string(s) + "' (expected pg or ps)");
}

std::uint64_t row_key(std::span<const TokenId> tokens) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL ^ tokens.size();
  for (TokenId t : tokens) h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)));
  return h;
}

namespace {

std::uint64_t row_substream(std::uint64_t salt, std::span<const TokenId> row) {
  return mix64(salt * 0x9e3779b97f4a7c15ULL + 0x51ed27) ^ row_key(row);
}

std::span<const TokenId> row_tokens(const data::Batch& b, std::size_t r) {
  return std::span(b.ids).subspan(r * b.max_len, b.lengths[r]);
}

}  // namespace

data::MaskedBatch mask_rows(const data::Batch& batch, double mask_frac, int ngram_max, std::uint64_t seed,
                            std::uint64_t salt) {
  data::MaskedBatch mb;
  mb.batch = batch;
  mb.corrupted = batch.ids;
  const std::size_t L = batch.max_len;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto row = row_tokens(batch, r);
    Rng rng(seed, Stream::kMasking, row_substream(salt, row));
    const auto ex = data::mask_sequence(row, mask_frac, ngram_max, rng);
    for (std::size_t p : ex.positions) {
      mb.mask_positions.push_back(r * L + p);
      mb.corrupted[r * L + p] = data::kMask;
    }
  }
  return mb;
}

sampling::PositionProposal make_proposal(model::Variant variant, Scheme scheme, std::span<const double> mlm_logits,
                                         std::span<const double> sampling_logits, TokenId original) {
  sampling::PositionProposal prop;
  prop.pg = sampling::mlm_distribution(mlm_logits);
  if (variant == model::Variant::kHpLoss) {
    std::vector<double> dhat(sampling_logits.size());
    for (std::size_t v = 0; v < dhat.size(); ++v) dhat[v] = 1.0 / (1.0 + std::exp(-sampling_logits[v]));
    prop.est_loss = sampling::estimated_disc_loss(dhat, original);
  }
  if (scheme == Scheme::kPg || variant == model::Variant::kNone) {
    prop.draw = sampling::exclude_specials(prop.pg);
  } else if (variant == model::Variant::kHpLoss) {
    prop.draw = sampling::exclude_specials(sampling::hp_loss_distribution(prop.pg, prop.est_loss));
  } else {
    prop.draw = sampling::exclude_specials(sampling::hp_dist_distribution(sampling_logits));
  }
  return prop;
}

PipelineResult run_pipeline(const model::ModelPair& models, const data::Batch& batch, const PipelineSettings& settings,
                            Rng* dropout) {
  RTD_REQUIRE(batch.rows() > 0, "run_pipeline: empty batch");
  const auto variant = models.config().variant;
  PipelineResult res;
  res.masked = mask_rows(batch, settings.mask_frac, settings.ngram_max, settings.seed, settings.salt);
  const auto& mb = res.masked;
  const model::TokenLayout layout{batch.rows(), batch.max_len, batch.valid};

  res.gen = models.generator_forward(mb.corrupted, mb.mask_positions, layout, dropout);

  const std::size_t M = mb.mask_positions.size();
  const std::size_t V = models.config().vocab_size;
  const auto logits = res.gen.mlm_logits.values();
  std::span<const double> slogits;
  if (res.gen.has_sampling()) slogits = res.gen.sampling_logits.values();
  res.targets.resize(M);
  res.proposals.reserve(M);
  for (std::size_t i = 0; i < M; ++i) {
    const TokenId x = batch.ids[mb.mask_positions[i]];
    res.targets[i] = x;
    res.proposals.push_back(make_proposal(variant, settings.scheme, logits.subspan(i * V, V),
                                          slogits.empty() ? slogits : slogits.subspan(i * V, V), x));
  }

  // Draw row by row so each row's replacements are keyed like its mask.
  res.replacement.replaced = mb.corrupted;
  std::size_t begin = 0;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    std::size_t end = begin;
    const std::size_t row_end = (r + 1) * batch.max_len;
    while (end < M && mb.mask_positions[end] < row_end) ++end;
    if (end == begin) continue;
    Rng rng(settings.seed, Stream::kSampling, row_substream(settings.salt, row_tokens(batch, r)));
    auto part = sampling::sample_replacements(
        batch.ids, mb.corrupted, std::span(mb.mask_positions).subspan(begin, end - begin),
        std::span<const sampling::PositionProposal>(res.proposals).subspan(begin, end - begin), rng);
    for (const auto& d : part.decisions) {
      res.replacement.replaced[d.position] = d.sampled;
      res.replacement.decisions.push_back(d);
    }
    begin = end;
  }
  res.sampled.resize(M);
  for (std::size_t i = 0; i < M; ++i) res.sampled[i] = res.replacement.decisions[i].sampled;

  const std::size_t N = batch.tokens();
  res.is_original.assign(N, 1);
  res.is_masked.assign(N, 0);
  for (std::size_t i = 0; i < N; ++i) res.is_original[i] = res.replacement.replaced[i] == batch.ids[i] ? 1 : 0;
  for (std::size_t p : mb.mask_positions) res.is_masked[p] = 1;

  res.disc = models.discriminator_forward(res.replacement.replaced, layout, dropout);
  return res;
}

}  // namespace rtd::train
